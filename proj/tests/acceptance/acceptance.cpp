// Acceptance run: ten quantitative criteria plus a determinism check that
// repeats every job with 1 and 8 workers and compares the statistics CSVs.
// Prints one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include <shs/experiments.hpp>

using namespace shs;

namespace {

constexpr std::uint64_t kSeed = 20240601;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Verdict {
  Verdict(bool ok = false, std::string why = {}) : pass(ok), detail(std::move(why)) {}
  bool pass = false;
  std::string detail;
  std::string csv;  ///< statistics the verdict was computed from
  double seconds = 0.0;
};

EnsembleConfig ensemble(std::size_t paths, unsigned workers, std::uint64_t salt = 0) {
  return {paths, derived_seed(kSeed, salt), 256, workers};
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

SchemeConfig euler(int n = 100) { return {EulerMaruyama{}, n}; }
SchemeConfig theta_scheme(double theta, int n = 100) { return {SymplTheta{theta}, n}; }

bool within_rel(double x, double target, double rel) { return std::abs(x - target) <= rel * std::abs(target); }

// ---------------------------------------------------------------- 1: orders

const std::vector<int> kLadder{16, 32, 64, 128, 256, 512};

std::vector<StatRow> order_study_rows(const std::string& label, const OrderStudy& st, const SchemeConfig& s) {
  std::vector<StatRow> rows;
  for (const auto& p : st.points)
    rows.push_back({"c1", label, method_label(s), s.theta(), p.n, 1.0, 2000, "rms_terminal_error", p.rms(), kNan});
  rows.push_back({"c1", label, method_label(s), s.theta(), 0, 1.0, 2000, "fitted_slope", st.slope, kNan});
  return rows;
}

// Cached so criterion 8 can read the midpoint ladder from the same run.
std::map<unsigned, OrderStudy> g_midpoint_ladder;

Verdict criterion_orders(unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  struct Case {
    const char* problem;
    double theta;
    double lo, hi;
  };
  const Case cases[] = {{"kubo", 1.0, 0.40, 0.60}, {"linosc", 1.0, 0.85, 1.15}, {"kubo", 0.5, 0.85, 1.15}};
  Verdict v{true};
  std::vector<StatRow> rows;
  for (const auto& c : cases) {
    const auto scheme = theta_scheme(c.theta, kLadder.front());
    const auto st = order_study(make_problem(c.problem), scheme, kLadder, 1, ensemble(2000, workers, 1));
    if (c.theta == 0.5) g_midpoint_ladder[workers] = st;
    const bool ok = st.slope >= c.lo && st.slope <= c.hi;
    v.pass = v.pass && ok;
    v.detail += fmt::format("{} θ={} slope {:.3f} in [{}, {}]{}; ", c.problem, c.theta, st.slope, c.lo, c.hi,
                            ok ? "" : " NO");
    const auto r = order_study_rows(c.problem, st, scheme);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  v.seconds = elapsed_since(start);
  v.pass = v.pass && v.seconds <= 120.0;
  v.detail += fmt::format("{:.0f} s of 120 s", v.seconds);
  v.csv = stats_csv(rows);
  return v;
}

// ------------------------------------------------------- 2, 3: Kubo at T = 4

std::map<unsigned, std::pair<HamdevStudy, double>> g_kubo_T4;

const std::pair<HamdevStudy, double>& kubo_T4(unsigned workers) {
  auto it = g_kubo_T4.find(workers);
  if (it == g_kubo_T4.end()) {
    const auto start = std::chrono::steady_clock::now();
    auto st = hamdev_study(make_kubo(), {euler(), theta_scheme(1.0)}, 100, {4.0}, ensemble(100000, workers, 2));
    it = g_kubo_T4.emplace(workers, std::pair{std::move(st), elapsed_since(start)}).first;
  }
  return it->second;
}

Verdict criterion_kubo_second_moment(unsigned workers) {
  const auto& [st, seconds] = kubo_T4(workers);
  const double eu = st.at(0, 0).squared.mean;
  const double sy = st.at(1, 0).squared.mean;
  const double sy_ref = hamdev_limit_value(BuiltinProblem::Kubo, MethodKind::SymplTheta, 1.0, 4.0);
  const bool eu_ok = within_rel(eu, 2.0, 0.10);
  const bool sy_ok = within_rel(sy, 1.025, 0.10);
  Verdict v{eu_ok && sy_ok && sy < eu && seconds <= 60.0};
  v.detail = fmt::format("Euler n·E[ΔH²] {:.4f} (2.0 ± 10%){}; θ=1 {:.4f} (1.025 ± 10%, closed form {:.4f}){}; "
                         "θ=1 below Euler {}; {:.0f} s of 60 s",
                         eu, eu_ok ? "" : " NO", sy, sy_ref, sy_ok ? "" : " NO", sy < eu ? "yes" : "NO", seconds);
  v.csv = stats_csv(hamdev_rows(st, "c2", "kubo", 100000));
  v.seconds = seconds;
  return v;
}

Verdict criterion_kubo_mean(unsigned workers) {
  const auto& [st, seconds] = kubo_T4(workers);
  Verdict v{true};
  for (std::size_t s = 0; s < 2; ++s) {
    const auto ci = confidence_interval(st.at(s, 0).scaled);
    const bool ok = std::abs(ci.mean) <= 3.0 * ci.halfwidth;
    v.pass = v.pass && ok;
    v.detail += fmt::format("{} √n·E[ΔH] {:.4f}, 3·CI {:.4f}{}; ", s == 0 ? "Euler" : "θ=1", ci.mean,
                            3.0 * ci.halfwidth, ok ? "" : " NO");
  }
  v.csv = stats_csv(hamdev_rows(st, "c3", "kubo", 100000));
  v.seconds = seconds;
  return v;
}

// ------------------------------------------------------ 4: LinOsc mean at T=4

std::vector<double> half_steps(double upto) {
  std::vector<double> t;
  for (int k = 1; 0.5 * k <= upto + 1e-12; ++k) t.push_back(0.5 * k);
  return t;
}

Verdict criterion_linosc_mean(unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  // θ = 0.1 sign check needs several times; the horizon stays T = 4.
  const auto times = half_steps(4.0);
  const auto st = hamdev_study(make_linear_oscillator(), {euler(), theta_scheme(1.0), theta_scheme(0.1)}, 100, times,
                               ensemble(1000000, workers, 4));
  Verdict v{true};
  v.seconds = elapsed_since(start);
  const std::size_t at4 = times.size() - 1;
  const double eu = st.at(0, at4).scaled.mean;
  const double sy = st.at(1, at4).scaled.mean;
  const bool eu_ok = within_rel(eu, 4.0, 0.10);
  const bool sy_ok = std::abs(sy - 0.1432) <= 0.05;
  bool neg_ok = true;
  std::string neg;
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!(1.0 - std::cos(2.0 * times[j]) > 0.0)) continue;
    const double x = st.at(2, j).scaled.mean;
    neg_ok = neg_ok && x < 0.0;
    neg += fmt::format("{}{:.4f}", neg.empty() ? "" : " ", x);
  }
  v.pass = eu_ok && sy_ok && neg_ok && v.seconds <= 600.0;
  v.detail = fmt::format("Euler n·E[ΔH] {:.4f} (4.0 ± 10%){}; θ=1 {:.4f} (0.1432 ± 0.05){}; θ=0.1 [{}] all < 0 {}; "
                         "{:.0f} s of 600 s",
                         eu, eu_ok ? "" : " NO", sy, sy_ok ? "" : " NO", neg, neg_ok ? "yes" : "NO", v.seconds);
  v.csv = stats_csv(hamdev_rows(st, "c4", "linosc", 1000000));
  return v;
}

// ----------------------------------------------------------- 5: time profiles

Verdict criterion_time_profiles(unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> kubo_times;
  for (int t = 1; t <= 10; ++t) kubo_times.push_back(t);
  const auto lin_times = half_steps(6.0);
  const auto kubo = hamdev_study(make_kubo(), {euler(), theta_scheme(1.0)}, 100, kubo_times, ensemble(100000, workers, 5));
  const auto lin =
      hamdev_study(make_linear_oscillator(), {euler(), theta_scheme(1.0)}, 100, lin_times, ensemble(1000000, workers, 6));
  Verdict v{true};
  std::string misses, crossings;
  auto check = [&](const char* name, const HamdevStudy& st, bool second, auto reference) {
    for (std::size_t j = 0; j < st.times.size(); ++j) {
      const double t = st.times[j];
      const double eu = second ? st.at(0, j).squared.mean : st.at(0, j).scaled.mean;
      const double sy = second ? st.at(1, j).squared.mean : st.at(1, j).scaled.mean;
      const double ref = reference(t);
      if (!within_rel(eu, ref, 0.15)) {
        v.pass = false;
        misses += fmt::format(" {} t={} Euler {:.3f} vs {:.3f} ({:+.0f}%)", name, t, eu, ref, 100.0 * (eu / ref - 1.0));
      }
      if (!(sy < eu)) {
        v.pass = false;
        crossings += fmt::format(" {} t={}", name, t);
      }
    }
  };
  check("kubo", kubo, true, [](double t) { return t / 2.0; });
  check("linosc", lin, false, [](double t) { return t * t / 4.0; });
  v.seconds = elapsed_since(start);
  v.detail = fmt::format("Euler within 15%: {}; θ=1 below Euler: {}", misses.empty() ? "all points" : "misses" + misses,
                         crossings.empty() ? "all points" : "crosses at" + crossings);
  auto rows = hamdev_rows(kubo, "c5", "kubo", 100000);
  const auto more = hamdev_rows(lin, "c5", "linosc", 1000000);
  rows.insert(rows.end(), more.begin(), more.end());
  v.csv = stats_csv(rows);
  return v;
}

// ------------------------------------------------ 6: error-distribution match

Verdict criterion_error_distribution(unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  const auto problem = make_kubo();
  const auto scheme = euler(200);
  const int T = 4;
  const auto scheme_ens = ensemble(10000, workers, 7);
  const auto limit_ens = ensemble(10000, workers, 8);
  const auto r = compare_sides(scheme_side(problem, scheme, T, scheme_ens), limit_side(problem, scheme, T, limit_ens, 1));
  Verdict v{r.D_P <= 0.05 && r.D_P_wpos <= 0.08 && r.D_P_wneg <= 0.08};
  v.seconds = elapsed_since(start);
  v.detail = fmt::format("KS D(P) {:.4f} (≤ 0.05); W_T>0 {:.4f}, W_T≤0 {:.4f} (≤ 0.08); D(Q) {:.4f} for reference",
                         r.D_P, r.D_P_wpos, r.D_P_wneg, r.D_Q);
  ExperimentConfig cfg;
  v.csv = stats_csv(errordist_rows(cfg, r, scheme, T));
  return v;
}

// ----------------------------------------------------------- 7: structure

Verdict criterion_structure(unsigned) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.seed = kSeed;
  auto lines = structure_lines(cfg, 100);
  const auto bad = corrupted_structure_lines(100, kSeed);
  double worst = 0.0, weakest_corruption = std::numeric_limits<double>::infinity();
  for (const auto& l : lines) worst = std::max(worst, l.max_residual);
  for (const auto& l : bad) weakest_corruption = std::min(weakest_corruption, l.max_residual);
  Verdict v{worst <= kStructureTolerance && weakest_corruption >= kCorruptedFloor};
  v.seconds = elapsed_since(start);
  v.detail = fmt::format("{} regime/θ lines, max residual {:.2e} (≤ 1e-10); corrupted min residual {:.3f} (≥ 0.01)",
                         lines.size(), worst, weakest_corruption);
  lines.insert(lines.end(), bad.begin(), bad.end());
  v.csv = stats_csv(structure_rows(lines));
  return v;
}

// ---------------------------------------------------- 8: midpoint degeneracy

Verdict criterion_midpoint(unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  const auto problem = make_kubo();
  const LimitSpec<1> spec(MultThetaScheme{0.5}, problem);
  const auto samples = limit_samples(spec, 4.0, ensemble(2000, workers, 9), LimitGrid{100, 16});
  std::size_t nonzero = 0;
  for (const auto& s : samples)
    for (double u : s.U) nonzero += u != 0.0 ? 1 : 0;

  auto it = g_midpoint_ladder.find(workers);
  if (it == g_midpoint_ladder.end())
    it = g_midpoint_ladder
             .emplace(workers, order_study(problem, theta_scheme(0.5, kLadder.front()), kLadder, 1,
                                           ensemble(2000, workers, 1)))
             .first;
  std::vector<StatRow> rows;
  bool monotone = true;
  std::string seq;
  double previous = std::numeric_limits<double>::infinity();
  for (const auto& p : it->second.points) {
    const double scaled = p.n * p.terminal_sq.mean;  // E|√n(X^n_T − X_T)|²
    monotone = monotone && scaled < previous;
    previous = scaled;
    seq += fmt::format("{}{:.3g}", seq.empty() ? "" : " ", scaled);
    rows.push_back({"c8", "kubo", "sympl", 0.5, p.n, 1.0, 2000, "scaled_second_moment", scaled, kNan});
  }
  rows.push_back({"c8", "kubo", "limit", 0.5, 100, 4.0, samples.size(), "nonzero_U_components",
                  static_cast<double>(nonzero), kNan});
  Verdict v{nonzero == 0 && monotone};
  v.seconds = elapsed_since(start);
  v.detail = fmt::format("limit U nonzero components {} of {}; n·E|err|² over ladder [{}] decreasing {}", nonzero,
                         2 * samples.size(), seq, monotone ? "yes" : "NO");
  v.csv = stats_csv(rows);
  return v;
}

// ------------------------------------------------- 9: modified-equation gap

Verdict criterion_modified_equation(unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  const auto problem = make_kubo();
  const auto gaps = modified_gap_study(problem, {32, 64, 128, 256}, 1, ensemble(1000, workers, 10));
  std::vector<std::pair<double, double>> pairs;
  std::vector<StatRow> rows;
  for (const auto& g : gaps) {
    pairs.emplace_back(g.n, g.sup_gap.mean);
    rows.push_back({"c9", "kubo", "modified", 1.0, g.n, 1.0, 1000, "mean_sup_gap", g.sup_gap.mean, kNan});
  }
  const double slope = empirical_order(pairs);
  const auto pairs128 = modified_error_samples(problem, 128, 1, ensemble(10000, workers, 11));
  std::vector<double> me_P, sc_P, me_Q, sc_Q;
  for (const auto& p : pairs128) {
    me_P.push_back(p.modified[0]);
    me_Q.push_back(p.modified[1]);
    sc_P.push_back(p.scheme[0]);
    sc_Q.push_back(p.scheme[1]);
  }
  const double D_P = two_sample_ks(me_P, sc_P).D;
  const double D_Q = two_sample_ks(me_Q, sc_Q).D;
  rows.push_back({"c9", "kubo", "modified", 1.0, 0, 1.0, 1000, "gap_slope", slope, kNan});
  rows.push_back({"c9", "kubo", "modified", 1.0, 128, 1.0, 10000, "ks_D_P", D_P, kNan});
  rows.push_back({"c9", "kubo", "modified", 1.0, 128, 1.0, 10000, "ks_D_Q", D_Q, kNan});
  Verdict v{slope >= 0.9 && D_P <= 0.05 && D_Q <= 0.05};
  v.seconds = elapsed_since(start);
  v.detail = fmt::format("sup-gap slope {:.3f} (≥ 0.9); KS at n=128 D(P) {:.4f}, D(Q) {:.4f} (≤ 0.05)", slope, D_P, D_Q);
  v.csv = stats_csv(rows);
  return v;
}

// ---------------------------------------------------------- 10: truncation

Verdict criterion_truncation(unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  const int n = 100;
  const double rho = 2.5;
  // 10⁵ paths of 1000 coarse steps: about 160 clamps expected.
  const auto d = truncation_diagnostics(TruncationPolicy(rho), n, 10, ensemble(100000, workers, 12));
  const bool rate_ok = d.clamp_rate >= d.expected_rate / 3.0 && d.clamp_rate <= 3.0 * d.expected_rate;
  const double excess_bound = 10.0 * std::pow(n, -rho);
  const bool excess_ok = d.mean_sq_excess <= excess_bound;
  const std::vector<int> omega_n{16, 64, 256};
  const auto freq = omega_frequencies(omega_n, 16, 1, OmegaProbe(0.1), ensemble(10000, workers, 13));
  const bool omega_ok = freq[1] <= freq[0] && freq[2] <= freq[1];
  std::vector<StatRow> rows{
      {"c10", "", "truncation", kNan, n, 10.0, 100000, "clamp_rate", d.clamp_rate, kNan},
      {"c10", "", "truncation", kNan, n, 10.0, 100000, "expected_clamp_rate", d.expected_rate, kNan},
      {"c10", "", "truncation", kNan, n, 10.0, 100000, "mean_sq_excess", d.mean_sq_excess, kNan},
  };
  for (std::size_t i = 0; i < freq.size(); ++i)
    rows.push_back({"c10", "", "omega", kNan, omega_n[i], 1.0, 10000, "omega_complement_frequency", freq[i], kNan});
  Verdict v{rate_ok && excess_ok && omega_ok};
  v.seconds = elapsed_since(start);
  v.detail = fmt::format(
      "clamps {} of {} draws, rate {:.3e} vs 2Φ(−A) {:.3e}{}; E|ξ−ζ|² {:.2e} ≤ {:.1e}{}; Ω complement {:.4f} {:.4f} "
      "{:.4f} non-increasing {}",
      d.clamps, d.draws, d.clamp_rate, d.expected_rate, rate_ok ? "" : " NO", d.mean_sq_excess, excess_bound,
      excess_ok ? "" : " NO", freq[0], freq[1], freq[2], omega_ok ? "yes" : "NO");
  v.csv = stats_csv(rows);
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict(unsigned)> run;
  };
  const std::vector<Criterion> criteria{
      {"strong orders", criterion_orders},
      {"Kubo second moment", criterion_kubo_second_moment},
      {"Kubo mean deviation", criterion_kubo_mean},
      {"LinOsc mean deviation", criterion_linosc_mean},
      {"time profiles", criterion_time_profiles},
      {"error distribution", criterion_error_distribution},
      {"Hamiltonian structure", criterion_structure},
      {"midpoint degeneracy", criterion_midpoint},
      {"modified-equation closeness", criterion_modified_equation},
      {"truncation diagnostics", criterion_truncation},
  };

  bool all = true;
  std::vector<std::string> csv_8;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].run(8);
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    all = all && v.pass;
    csv_8.push_back(v.csv);
    std::cout << fmt::format("criterion {:2} {:4} {}: {}\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].name,
                             v.detail)
              << std::flush;
  }

  std::size_t identical = 0;
  std::string differing;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string csv_1;
    try {
      csv_1 = criteria[i].run(1).csv;
    } catch (const std::exception& e) {
      csv_1 = std::string("threw: ") + e.what();
    }
    if (!csv_8[i].empty() && csv_1 == csv_8[i])
      ++identical;
    else
      differing += fmt::format(" {}", i + 1);
  }
  const bool det_ok = identical == criteria.size();
  all = all && det_ok;
  std::cout << fmt::format("criterion 11 {:4} determinism: {} of {} statistics CSVs bitwise identical for workers 1 "
                           "and 8{}\n",
                           det_ok ? "PASS" : "FAIL", identical, criteria.size(),
                           differing.empty() ? "" : "; differ:" + differing);
  return all ? 0 : 1;
}
