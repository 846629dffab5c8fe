// Command-line front end: simulate | order | hamdev | errordist | figures | structure-check.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <shs/config.hpp>
#include <shs/experiments.hpp>

namespace {

struct FlagValues {
  std::map<std::string, std::string> values;  // config key -> raw text
  std::string config_path;
  bool zero_noise = false;
  bool self_test = false;
};

void add_flags(CLI::App* cmd, FlagValues& f) {
  const std::pair<const char*, const char*> keyed[] = {
      {"--problem", "problem"}, {"--method", "method"},   {"--theta", "theta"},     {"--theta-list", "theta_list"},
      {"--n", "n"},             {"--n-list", "n_list"},   {"--T", "T"},             {"--t-list", "t_list"},
      {"--paths", "paths"},     {"--seed", "seed"},       {"--rho", "rho"},         {"--epsilon", "epsilon"},
      {"--refine", "refine"},   {"--out", "out"},         {"--workers", "workers"}, {"--batch", "batch"},
      {"--initial", "initial"},
  };
  for (const auto& [flag, key] : keyed) {
    const std::string k = key;
    cmd->add_option_function<std::string>(
        flag, [&f, k](const std::string& v) { f.values[k] = v; }, "config key '" + k + "'");
  }
  cmd->add_option("--config", f.config_path, "key = value file; flags override it");
  cmd->add_flag("--zero-noise", f.zero_noise, "drive the scheme with zero increments");
  cmd->add_flag("--self-test", f.self_test, "exit 4 when a built-in threshold is violated");
}

shs::ExperimentConfig build_config(const FlagValues& f) {
  shs::ExperimentConfig cfg;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw shs::ConfigError(0, "cannot read config file " + f.config_path);
    std::stringstream text;
    text << in.rdbuf();
    try {
      cfg = shs::parse_config(text.str());
    } catch (const shs::ConfigError& e) {
      throw shs::ConfigError(0, f.config_path + ": " + e.what());
    }
  }
  for (const auto& [key, value] : f.values) shs::apply_setting(cfg, key, value, 0);
  if (f.zero_noise) cfg.zero_noise = true;
  if (f.self_test) cfg.self_test = true;
  shs::validate(cfg);
  return cfg;
}

bool caused_by_nonconvergence(const shs::PathFailure& e) {
  try {
    e.rethrow_cause();
  } catch (const shs::NonConvergence&) {
    return true;
  } catch (...) {
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation lab for stochastic Hamiltonian systems"};
  app.require_subcommand(1);
  FlagValues flags;
  std::string figure;

  auto* simulate = app.add_subcommand("simulate", "write scheme trajectories as CSV");
  auto* order = app.add_subcommand("order", "strong-error ladder and fitted slope");
  auto* hamdev = app.add_subcommand("hamdev", "scaled Hamiltonian-deviation statistics");
  auto* errordist = app.add_subcommand("errordist", "KS comparison of scheme errors with the limit law");
  auto* figures = app.add_subcommand("figures", "plot data for fig1a|fig1b|fig2|fig3|fig4");
  auto* structure = app.add_subcommand("structure-check", "Hamiltonian structure residuals of the limit equations");
  figures->add_option("which", figure, "fig1a|fig1b|fig2|fig3|fig4")->required();
  for (auto* cmd : {simulate, order, hamdev, errordist, figures, structure}) add_flags(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : shs::kExitConfig;
  }

  try {
    const auto cfg = build_config(flags);
    if (simulate->parsed()) return shs::cmd_simulate(cfg, std::cout);
    if (order->parsed()) return shs::cmd_order(cfg, std::cout);
    if (hamdev->parsed()) return shs::cmd_hamdev(cfg, std::cout);
    if (errordist->parsed()) return shs::cmd_errordist(cfg, std::cout);
    if (figures->parsed()) return shs::cmd_figures(figure, cfg, std::cout);
    if (structure->parsed()) return shs::cmd_structure_check(cfg, std::cout);
  } catch (const shs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return shs::kExitConfig;
  } catch (const shs::NonConvergence& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return shs::kExitNumerical;
  } catch (const shs::PathFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return caused_by_nonconvergence(e) ? shs::kExitNumerical : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return shs::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
