#ifndef SHS_EXPERIMENTS_HPP
#define SHS_EXPERIMENTS_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "config.hpp"
#include "integrators.hpp"
#include "limit_sde.hpp"
#include "montecarlo.hpp"
#include "noise_lattice.hpp"
#include "problem_model.hpp"
#include "rng.hpp"
#include "statistics.hpp"

namespace shs {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitSelfTest = 4 };

/// Built-in problem with the config's initial-value override applied.
inline Problem1 resolve_problem(const ExperimentConfig& cfg) {
  Problem1 p = make_problem(cfg.problem);
  if (cfg.initial) {
    p.initial = {detail::v1(cfg.initial->first), detail::v1(cfg.initial->second)};
    if (p.exact.kind == ExactKind::PointwiseOfW) {
      // The closed form is tied to the built-in start; rotate it instead.
      const double r = std::hypot(cfg.initial->first, cfg.initial->second);
      const double phase = std::atan2(-cfg.initial->first, cfg.initial->second);
      p.exact.pointwise = [r, phase](double t, double W) {
        return State1{detail::v1(-r * std::sin(t + W + phase)), detail::v1(r * std::cos(t + W + phase))};
      };
    }
  }
  return p;
}

inline SchemeConfig scheme_from(const ExperimentConfig& cfg, int n, std::optional<double> theta = {}) {
  SchemeConfig s;
  s.n = n;
  s.truncation = TruncationPolicy(cfg.rho, true);
  if (theta)
    s.method = SymplTheta{*theta};
  else if (cfg.method == "euler")
    s.method = EulerMaruyama{};
  else
    s.method = SymplTheta{cfg.theta};
  return s;
}

/// Primary method followed by one θ-scheme per theta_list entry.
inline std::vector<SchemeConfig> schemes_from(const ExperimentConfig& cfg, int n) {
  std::vector<SchemeConfig> out{scheme_from(cfg, n)};
  for (double th : cfg.theta_list) out.push_back(scheme_from(cfg, n, th));
  return out;
}

inline EnsembleConfig ensemble_from(const ExperimentConfig& cfg, std::size_t default_paths) {
  return {cfg.paths.value_or(default_paths), cfg.seed, cfg.batch, cfg.workers};
}

inline std::filesystem::path output_file(const ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out);
  return std::filesystem::path(cfg.out) / name;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

inline std::string stats_csv(const std::vector<StatRow>& rows) {
  std::ostringstream os;
  write_stats_csv(os, rows);
  return os.str();
}

// ---------------------------------------------------------------- simulate

inline int cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  const auto problem = resolve_problem(cfg);
  const int n = cfg.n.value_or(100);
  const int T = cfg.T.value_or(1);
  const auto scheme = scheme_from(cfg, n);
  const std::size_t paths = cfg.paths.value_or(1);
  for (std::size_t p = 0; p < paths; ++p) {
    const auto lat = cfg.zero_noise ? zero_lattice(n, 1, T) : sample_lattice(n, 1, T, cfg.seed, p);
    const auto traj = integrate(problem, scheme, lat);
    const auto file = output_file(cfg, fmt::format("trajectory_{}_{}.csv", problem.id, p));
    std::ofstream os(file);
    write_trajectory_csv(os, traj);
    log << fmt::format("wrote {} ({} nodes, {} clamps, {} solver iterations)\n", file.string(), traj.states.size(),
                       traj.clamp_count, traj.total_iterations);
  }
  return kExitOk;
}

// ------------------------------------------------------------------- order

inline std::vector<StatRow> order_rows(const ExperimentConfig& cfg) {
  const auto problem = resolve_problem(cfg);
  const auto n_list = cfg.n_list.empty() ? std::vector<int>{16, 32, 64, 128, 256, 512} : cfg.n_list;
  const int T = cfg.T.value_or(1);
  const auto ens = ensemble_from(cfg, 2000);
  const auto scheme = scheme_from(cfg, n_list.front());
  const auto st = order_study(problem, scheme, n_list, T, ens);
  const double theta = scheme.is_theta() ? scheme.theta() : std::numeric_limits<double>::quiet_NaN();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<StatRow> rows;
  for (const auto& pt : st.points) {
    rows.push_back({"order", problem.id, method_label(scheme), theta, pt.n, static_cast<double>(T), ens.paths,
                    "rms_terminal_error", pt.rms(), nan});
    const auto ci = confidence_interval(pt.sup);
    rows.push_back({"order", problem.id, method_label(scheme), theta, pt.n, static_cast<double>(T), ens.paths,
                    "mean_sup_error", ci.mean, ci.halfwidth});
  }
  // n = 0 marks a fit across the whole ladder.
  rows.push_back(
      {"order", problem.id, method_label(scheme), theta, 0, static_cast<double>(T), ens.paths, "fitted_slope", st.slope, nan});
  return rows;
}

inline int cmd_order(const ExperimentConfig& cfg, std::ostream& log) {
  const auto rows = order_rows(cfg);
  write_text(output_file(cfg, "order.csv"), stats_csv(rows));
  log << fmt::format("fitted slope {:.4f}\n", rows.back().value);
  return kExitOk;
}

// ------------------------------------------------------------------ hamdev

inline std::vector<StatRow> hamdev_rows_for(const ExperimentConfig& cfg, const std::string& job_id) {
  const auto problem = resolve_problem(cfg);
  const int n = cfg.n.value_or(100);
  auto times = cfg.t_list;
  if (times.empty()) times.push_back(static_cast<double>(cfg.T.value_or(4)));
  const std::size_t default_paths = problem.coeffs.noise_kind == NoiseKind::Multiplicative ? 100000 : 1000000;
  const auto ens = ensemble_from(cfg, default_paths);
  const auto st = hamdev_study(problem, schemes_from(cfg, n), n, times, ens);
  return hamdev_rows(st, job_id, problem.id, ens.paths);
}

inline int cmd_hamdev(const ExperimentConfig& cfg, std::ostream& log) {
  const auto rows = hamdev_rows_for(cfg, "hamdev");
  write_text(output_file(cfg, "hamdev.csv"), stats_csv(rows));
  for (const auto& r : rows)
    log << fmt::format("{} theta={} t={} {} = {:.5f} ± {:.5f}\n", r.method, format_field(r.theta), r.t,
                       r.statistic_name, r.value, r.ci_halfwidth);
  return kExitOk;
}

// --------------------------------------------------------------- errordist

struct ErrordistSide {
  std::vector<double> P, Q, W;  ///< normalized error components and the W_T used for strata
};

inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t salt) {
  return seed ^ (0x9E3779B97F4A7C15ull * (salt + 1));
}

/// Draws from the limit law at time T: closed form for the Kubo Euler
/// baseline, otherwise the limit equation on the fine grid (n, refine).
inline ErrordistSide limit_side(const Problem1& problem, const SchemeConfig& scheme, int T, const EnsembleConfig& ens,
                                int refine) {
  ErrordistSide side;
  if (problem.id == "kubo" && !scheme.is_theta()) {
    struct Draw {
      double P, Q, W;
    };
    auto draws = run_ensemble(ens, Collector<Draw>{}, [&](std::uint64_t path, Collector<Draw>& acc) {
      NormalStream z(ens.seed, path, MotionTag::Aux);
      const double W = std::sqrt(static_cast<double>(T)) * z();
      const double B = std::sqrt(static_cast<double>(T)) * z();
      const auto [uP, uQ] = kubo_euler_limit_closed_form(T, W, B);
      acc.items.push_back({uP, uQ, W});
    });
    for (const auto& d : draws.items) {
      side.P.push_back(d.P);
      side.Q.push_back(d.Q);
      side.W.push_back(d.W);
    }
    return side;
  }
  const LimitSpec<1> spec(regime_for(scheme, problem.coeffs.noise_kind), problem);
  for (const auto& s : limit_samples(spec, T, ens, LimitGrid{scheme.n, refine})) {
    side.P.push_back(s.U[0]);
    side.Q.push_back(s.U[1]);
    side.W.push_back(s.W_t);
  }
  return side;
}

inline ErrordistSide scheme_side(const Problem1& problem, const SchemeConfig& scheme, int T, const EnsembleConfig& ens) {
  ErrordistSide side;
  for (const auto& e : scaled_error_samples(problem, scheme, scheme.n, T, ens)) {
    side.P.push_back(e.error[0]);
    side.Q.push_back(e.error[1]);
    side.W.push_back(e.W_t);
  }
  return side;
}

struct ErrordistReport {
  double D_P = 0.0, D_Q = 0.0;
  double D_P_wpos = 0.0, D_P_wneg = 0.0;
  double critical_1pct = 0.0;
  std::size_t M = 0;
};

inline ErrordistReport compare_sides(const ErrordistSide& a, const ErrordistSide& b) {
  ErrordistReport r;
  r.M = a.P.size();
  r.D_P = two_sample_ks(a.P, b.P).D;
  r.D_Q = two_sample_ks(a.Q, b.Q).D;
  auto stratum = [](const ErrordistSide& s, bool positive) {
    std::vector<double> out;
    for (std::size_t i = 0; i < s.P.size(); ++i)
      if ((s.W[i] > 0.0) == positive) out.push_back(s.P[i]);
    return out;
  };
  r.D_P_wpos = two_sample_ks(stratum(a, true), stratum(b, true)).D;
  r.D_P_wneg = two_sample_ks(stratum(a, false), stratum(b, false)).D;
  r.critical_1pct = ks_critical_value(0.01, a.P.size(), b.P.size());
  return r;
}

inline std::vector<StatRow> errordist_rows(const ExperimentConfig& cfg, const ErrordistReport& r, const SchemeConfig& s,
                                           int T) {
  const double theta = s.is_theta() ? s.theta() : std::numeric_limits<double>::quiet_NaN();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<StatRow> rows;
  auto add = [&](const char* name, double v) {
    rows.push_back({"errordist", cfg.problem, method_label(s), theta, s.n, static_cast<double>(T), r.M, name, v, nan});
  };
  add("ks_D_P", r.D_P);
  add("ks_D_Q", r.D_Q);
  add("ks_D_P_W_positive", r.D_P_wpos);
  add("ks_D_P_W_negative", r.D_P_wneg);
  add("ks_critical_1pct", r.critical_1pct);
  return rows;
}

inline int cmd_errordist(const ExperimentConfig& cfg, std::ostream& log) {
  const auto problem = resolve_problem(cfg);
  const int n = cfg.n.value_or(200);
  const int T = cfg.T.value_or(4);
  const auto scheme = scheme_from(cfg, n);
  const auto ens = ensemble_from(cfg, 10000);
  EnsembleConfig limit_ens = ens;
  limit_ens.seed = derived_seed(cfg.seed, 1);
  ErrordistReport r;
  if (cfg.self_test) {
    EnsembleConfig other = ens;
    other.seed = derived_seed(cfg.seed, 2);
    r = compare_sides(limit_side(problem, scheme, T, limit_ens, cfg.refine),
                      limit_side(problem, scheme, T, other, cfg.refine));
  } else {
    r = compare_sides(scheme_side(problem, scheme, T, ens), limit_side(problem, scheme, T, limit_ens, cfg.refine));
  }
  write_text(output_file(cfg, cfg.self_test ? "errordist_selftest.csv" : "errordist.csv"),
             stats_csv(errordist_rows(cfg, r, scheme, T)));
  log << fmt::format("KS D(P) = {:.4f}, D(Q) = {:.4f}, W_T>0: {:.4f}, W_T<=0: {:.4f}, 1% critical {:.4f}\n", r.D_P,
                     r.D_Q, r.D_P_wpos, r.D_P_wneg, r.critical_1pct);
  if (cfg.self_test && (r.D_P > r.critical_1pct || r.D_Q > r.critical_1pct)) {
    log << "self-test: KS distance above the 1% critical value\n";
    return kExitSelfTest;
  }
  return kExitOk;
}

// --------------------------------------------------------- structure-check

/// Random base states (standard normal components, fixed seed).
inline std::vector<State1> random_states(std::size_t count, std::uint64_t seed) {
  NormalStream z(seed, 0, MotionTag::Aux);
  std::vector<State1> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double P = z(), Q = z();
    out.push_back({detail::v1(P), detail::v1(Q)});
  }
  return out;
}

/// The same problem with jac_g_P scaled by `factor` (breaks the Hamiltonian link).
inline Problem1 corrupt_jac_g_P(Problem1 p, double factor = 1.1) {
  auto original = p.coeffs.jac_g_P;
  p.coeffs.jac_g_P = [original, factor](const Vec<1>& P, const Vec<1>& Q) { return Mat<1>(factor * original(P, Q)); };
  return p;
}

struct StructureLine {
  std::string problem;
  std::string regime;
  double theta = std::numeric_limits<double>::quiet_NaN();
  double max_residual = 0.0;
  double max_abs_H2 = 0.0;
};

inline std::string regime_label(const LimitRegime& r) {
  if (std::holds_alternative<MultThetaScheme>(r)) return "mult_theta";
  if (std::holds_alternative<MultEulerBaseline>(r)) return "mult_euler";
  if (std::holds_alternative<AddThetaScheme>(r)) return "add_theta";
  return "add_euler";
}

inline std::vector<LimitRegime> regimes_for(NoiseKind kind, const std::vector<double>& thetas) {
  std::vector<LimitRegime> out;
  for (double th : thetas)
    out.push_back(kind == NoiseKind::Multiplicative ? LimitRegime{MultThetaScheme{th}} : LimitRegime{AddThetaScheme{th}});
  out.push_back(kind == NoiseKind::Multiplicative ? LimitRegime{MultEulerBaseline{}} : LimitRegime{AddEulerBaseline{}});
  return out;
}

inline StructureLine structure_line(const Problem1& problem, const LimitRegime& regime, std::size_t probes,
                                    std::uint64_t seed) {
  const LimitSpec<1> spec(regime, problem);
  StructureLine line{problem.id, regime_label(regime)};
  std::visit(
      [&](const auto& r) {
        if constexpr (requires { r.theta; }) line.theta = r.theta;
      },
      regime);
  const auto states = random_states(probes, seed);
  const auto dirs = random_states(probes, derived_seed(seed, 3));
  for (std::size_t i = 0; i < states.size(); ++i) {
    line.max_residual = std::max(line.max_residual, check_hamiltonian_structure(spec, states[i]));
    line.max_abs_H2 = std::max(line.max_abs_H2, std::abs(assemble_H012(spec, states[i], dirs[i]).H2));
  }
  return line;
}

inline std::vector<StructureLine> structure_lines(const ExperimentConfig& cfg, std::size_t probes = 100) {
  std::vector<double> thetas{0.0, 0.5, 1.0};
  for (double th : cfg.theta_list) thetas.push_back(th);
  if (std::find(thetas.begin(), thetas.end(), cfg.theta) == thetas.end()) thetas.push_back(cfg.theta);
  std::vector<StructureLine> out;
  for (const char* id : {"kubo", "linosc"}) {
    const auto problem = make_problem(id);
    for (const auto& regime : regimes_for(problem.coeffs.noise_kind, thetas))
      out.push_back(structure_line(problem, regime, probes, cfg.seed));
  }
  return out;
}

/// Residuals of the corrupted problems under their θ = 1 regime.
inline std::vector<StructureLine> corrupted_structure_lines(std::size_t probes, std::uint64_t seed) {
  std::vector<StructureLine> out;
  for (const char* id : {"kubo", "linosc"}) {
    const auto problem = corrupt_jac_g_P(make_problem(id));
    const LimitRegime regime = problem.coeffs.noise_kind == NoiseKind::Multiplicative ? LimitRegime{MultThetaScheme{1.0}}
                                                                                       : LimitRegime{AddThetaScheme{1.0}};
    auto line = structure_line(problem, regime, probes, seed);
    line.problem += "_corrupted";
    out.push_back(line);
  }
  return out;
}

inline std::vector<StatRow> structure_rows(const std::vector<StructureLine>& lines) {
  std::vector<StatRow> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& l : lines) {
    rows.push_back({"structure", l.problem, l.regime, l.theta, 0, nan, 0, "max_residual", l.max_residual, nan});
    rows.push_back({"structure", l.problem, l.regime, l.theta, 0, nan, 0, "max_abs_H2", l.max_abs_H2, nan});
  }
  return rows;
}

inline constexpr double kStructureTolerance = 1e-10;
inline constexpr double kCorruptedFloor = 0.01;

inline int cmd_structure_check(const ExperimentConfig& cfg, std::ostream& log) {
  auto lines = structure_lines(cfg);
  const auto bad = corrupted_structure_lines(100, cfg.seed);
  bool ok = true;
  for (const auto& l : lines) {
    log << fmt::format("{:7} {:10} theta={:<5} residual {:.3e}  max|H2| {:.3e}\n", l.problem, l.regime,
                       format_field(l.theta), l.max_residual, l.max_abs_H2);
    ok = ok && l.max_residual <= kStructureTolerance;
  }
  if (cfg.self_test)
    for (const auto& l : bad) {
      log << fmt::format("{:17} {:10} residual {:.3e} (must be >= {})\n", l.problem, l.regime, l.max_residual,
                         kCorruptedFloor);
      ok = ok && l.max_residual >= kCorruptedFloor;
    }
  if (cfg.self_test) lines.insert(lines.end(), bad.begin(), bad.end());
  write_text(output_file(cfg, "structure.csv"), stats_csv(structure_rows(lines)));
  if (cfg.self_test && !ok) {
    log << "self-test: structure thresholds violated\n";
    return kExitSelfTest;
  }
  return kExitOk;
}

// ----------------------------------------------------------------- figures

enum class Figure { Fig1a, Fig1b, Fig2, Fig3, Fig4 };

inline Figure parse_figure(std::string_view s) {
  if (s == "fig1a") return Figure::Fig1a;
  if (s == "fig1b") return Figure::Fig1b;
  if (s == "fig2") return Figure::Fig2;
  if (s == "fig3") return Figure::Fig3;
  if (s == "fig4") return Figure::Fig4;
  throw ConfigError(0, fmt::format("unknown figure '{}' (expected fig1a|fig1b|fig2|fig3|fig4)", s));
}

inline std::string_view figure_name(Figure f) {
  switch (f) {
    case Figure::Fig1a: return "fig1a";
    case Figure::Fig1b: return "fig1b";
    case Figure::Fig2: return "fig2";
    case Figure::Fig3: return "fig3";
    case Figure::Fig4: return "fig4";
  }
  return "";
}

struct FigurePoint {
  double x = 0.0;
  double value = 0.0;
  double ci_halfwidth = 0.0;
  double reference = 0.0;
};

struct FigureCurve {
  std::string name;  ///< euler or theta_<θ>
  std::string x_label;
  std::vector<FigurePoint> points;
};

inline std::vector<FigureCurve> figure_curves(Figure fig, const ExperimentConfig& cfg) {
  const bool kubo = fig == Figure::Fig1a || fig == Figure::Fig1b || fig == Figure::Fig2;
  const bool versus_n = fig == Figure::Fig1a || fig == Figure::Fig1b || fig == Figure::Fig3;
  const bool second = fig == Figure::Fig1b || fig == Figure::Fig2;
  const auto which = kubo ? BuiltinProblem::Kubo : BuiltinProblem::LinOsc;
  const Problem1 problem = make_problem(which);
  const auto ens = ensemble_from(cfg, kubo ? 100000 : 1000000);

  std::vector<double> thetas = cfg.theta_list;
  if (thetas.empty()) thetas = kubo ? std::vector<double>{1.0} : std::vector<double>{1.0, 0.1};
  std::vector<FigureCurve> curves;
  curves.push_back({"euler", versus_n ? "n" : "t", {}});
  for (double th : thetas) curves.push_back({fmt::format("theta_{}", th), versus_n ? "n" : "t", {}});

  auto reference = [&](std::size_t curve, double t) {
    if (fig == Figure::Fig1a) return 0.0;
    const auto method = curve == 0 ? MethodKind::Euler : MethodKind::SymplTheta;
    return hamdev_limit_value(which, method, curve == 0 ? 0.0 : thetas[curve - 1], t);
  };
  auto schemes_at = [&](int n) {
    std::vector<SchemeConfig> s{SchemeConfig{EulerMaruyama{}, n, TruncationPolicy(cfg.rho)}};
    for (double th : thetas) s.push_back(SchemeConfig{SymplTheta{th}, n, TruncationPolicy(cfg.rho)});
    return s;
  };
  auto record = [&](const HamdevStudy& st, double x) {
    for (std::size_t c = 0; c < curves.size(); ++c)
      for (std::size_t j = 0; j < st.times.size(); ++j) {
        const auto& cell = st.at(c, j);
        const auto ci = confidence_interval(second ? cell.squared : cell.scaled);
        curves[c].points.push_back({versus_n ? x : st.times[j], ci.mean, ci.halfwidth, reference(c, st.times[j])});
      }
  };

  if (versus_n) {
    const auto n_list = cfg.n_list.empty() ? std::vector<int>{25, 50, 100, 200} : cfg.n_list;
    const double T = cfg.T.value_or(4);
    for (int n : n_list)
      record(hamdev_study(problem, schemes_at(n), n, {T}, ens), n);
  } else {
    const int n = cfg.n.value_or(100);
    std::vector<double> times = cfg.t_list;
    if (times.empty()) {
      if (kubo)
        for (int t = 1; t <= 10; ++t) times.push_back(t);
      else
        for (int k = 1; k <= 12; ++k) times.push_back(0.5 * k);
    }
    record(hamdev_study(problem, schemes_at(n), n, times, ens), 0.0);
  }
  return curves;
}

inline int cmd_figures(const std::string& which, const ExperimentConfig& cfg, std::ostream& log) {
  const Figure fig = parse_figure(which);
  for (const auto& curve : figure_curves(fig, cfg)) {
    std::ostringstream os;
    os << curve.x_label << ",value,ci_halfwidth,reference\n";
    for (const auto& p : curve.points)
      os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", p.x, p.value, p.ci_halfwidth, p.reference);
    const auto file = output_file(cfg, fmt::format("{}_{}.csv", figure_name(fig), curve.name));
    write_text(file, os.str());
    log << "wrote " << file.string() << '\n';
  }
  return kExitOk;
}

}  // namespace shs

#endif  // SHS_EXPERIMENTS_HPP
