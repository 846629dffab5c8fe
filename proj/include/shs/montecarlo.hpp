#ifndef SHS_MONTECARLO_HPP
#define SHS_MONTECARLO_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "ensemble.hpp"
#include "integrators.hpp"
#include "limit_sde.hpp"
#include "modified_eq.hpp"
#include "noise_lattice.hpp"
#include "problem_model.hpp"
#include "statistics.hpp"

namespace shs {

/// p in the n^p error normalization: ½ for multiplicative noise, 1 for additive.
inline double normalization_exponent(NoiseKind kind) { return kind == NoiseKind::Multiplicative ? 0.5 : 1.0; }

/// Fine substeps per coarse cell for the exact reference. Pointwise solutions
/// only need W at the coarse nodes; grid convolutions use h_fine ≤ h²·T.
template <int D>
int reference_refinement(const Problem<D>& problem, int n, int T) {
  if (problem.exact.kind == ExactKind::PointwiseOfW) return 1;
  return std::max(1, (n + T - 1) / T);
}

namespace detail {
template <class T>
void merge_elementwise(std::vector<T>& into, const std::vector<T>& from) {
  if (into.size() != from.size()) throw std::logic_error("accumulator shapes differ");
  for (std::size_t i = 0; i < into.size(); ++i) into[i].merge(from[i]);
}

inline int horizon_for_times(const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("need at least one evaluation time");
  return horizon_for(*std::max_element(times.begin(), times.end()));
}
}  // namespace detail

/// Moments of x = n^p·(H(X^n_t) − H(X_t)) and of x².
struct HamdevCell {
  StreamingMoments scaled;
  StreamingMoments squared;
  void merge(const HamdevCell& o) {
    scaled.merge(o.scaled);
    squared.merge(o.squared);
  }
};

struct HamdevStudy {
  int n = 0;
  double exponent = 0.5;
  std::vector<SchemeConfig> schemes;
  std::vector<double> times;
  std::vector<HamdevCell> cells;  ///< scheme-major: cells[s * times.size() + j]

  const HamdevCell& at(std::size_t scheme, std::size_t time) const { return cells[scheme * times.size() + time]; }
};

/// One lattice per path drives every scheme (coarse sums) and the exact
/// solution (fine grid); deviations are taken at each requested time.
template <int D>
HamdevStudy hamdev_study(const Problem<D>& problem, std::vector<SchemeConfig> schemes, int n,
                         std::vector<double> times, const EnsembleConfig& cfg, int reference_m = 0) {
  for (auto& s : schemes) {
    s.n = n;
    s.validate();
  }
  const int T = detail::horizon_for_times(times);
  const int m = reference_m > 0 ? reference_m : reference_refinement(problem, n, T);
  std::vector<std::size_t> nodes;
  for (double t : times) nodes.push_back(detail::node_index(t, n));
  const double scale = std::pow(static_cast<double>(n), normalization_exponent(problem.coeffs.noise_kind));
  const auto& H = problem.hamiltonians.H;

  struct Acc {
    std::vector<HamdevCell> cells;
    void merge(const Acc& o) { detail::merge_elementwise(cells, o.cells); }
  };
  Acc init{std::vector<HamdevCell>(schemes.size() * times.size())};
  auto acc = run_ensemble(cfg, init, [&](std::uint64_t path, Acc& a) {
    const auto lat = sample_lattice(n, m, T, cfg.seed, path);
    const auto exact = exact_coarse_path(problem, lat);
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      const auto traj = integrate(problem, schemes[s], lat);
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const auto& xn = traj.states[nodes[j]];
        const auto& x = exact[nodes[j]];
        const double v = scale * (H(xn.P, xn.Q) - H(x.P, x.Q));
        auto& cell = a.cells[s * nodes.size() + j];
        cell.scaled.add(v);
        cell.squared.add(v * v);
      }
    }
  });
  return {n, normalization_exponent(problem.coeffs.noise_kind), std::move(schemes), std::move(times),
          std::move(acc.cells)};
}

template <int D>
StreamingMoments scaled_hamiltonian_deviation(const Problem<D>& problem, const SchemeConfig& scheme, int n, double t,
                                              const EnsembleConfig& cfg) {
  return hamdev_study(problem, {scheme}, n, {t}, cfg).cells.front().scaled;
}

struct ErrorSample {
  std::uint64_t path_id = 0;
  std::vector<double> error;  ///< n^p(X^n_t − X_t), P components then Q
  double W_t = 0.0;
  double B_t = std::numeric_limits<double>::quiet_NaN();  ///< the scheme never sees B
};

template <int D>
std::vector<ErrorSample> scaled_error_samples(const Problem<D>& problem, SchemeConfig scheme, int n, double t,
                                              const EnsembleConfig& cfg) {
  scheme.n = n;
  scheme.validate();
  const int T = detail::horizon_for(t);
  const std::size_t node = detail::node_index(t, n);
  const int m = reference_refinement(problem, n, T);
  const double scale = std::pow(static_cast<double>(n), normalization_exponent(problem.coeffs.noise_kind));
  auto out = run_ensemble(cfg, Collector<ErrorSample>{}, [&](std::uint64_t path, Collector<ErrorSample>& acc) {
    const auto lat = sample_lattice(n, m, T, cfg.seed, path);
    const auto exact = exact_coarse_path(problem, lat);
    const auto traj = integrate(problem, scheme, lat);
    ErrorSample e;
    e.path_id = path;
    const PhaseVec<D> diff = scale * (traj.states[node].stacked() - exact[node].stacked());
    e.error.assign(diff.data(), diff.data() + diff.size());
    for (std::size_t i = 0; i < node * static_cast<std::size_t>(m); ++i) e.W_t += lat.dW_fine[i];
    acc.items.push_back(std::move(e));
  });
  return std::move(out.items);
}

struct OrderPoint {
  int n = 0;
  StreamingMoments terminal_sq;  ///< |X^n_T − X_T|²
  StreamingMoments sup;          ///< max over nodes of |X^n − X|
  double rms() const { return std::sqrt(terminal_sq.mean); }
  void merge(const OrderPoint& o) {
    terminal_sq.merge(o.terminal_sq);
    sup.merge(o.sup);
  }
};

struct OrderStudy {
  std::vector<OrderPoint> points;
  double slope = 0.0;  ///< fitted from RMS terminal errors
};

/// Strong-error ladder. Every n is driven by the same fine Brownian path
/// (sampled at the largest n, then regridded).
template <int D>
OrderStudy order_study(const Problem<D>& problem, SchemeConfig scheme, std::vector<int> n_list, int T,
                       const EnsembleConfig& cfg) {
  if (n_list.empty()) throw std::invalid_argument("order study needs an n ladder");
  std::sort(n_list.begin(), n_list.end());
  const int n_max = n_list.back();
  const int m = reference_refinement(problem, n_max, T);
  for (int n : n_list)
    if ((static_cast<long long>(n_max) * m) % n != 0)
      throw std::invalid_argument(fmt::format("ladder value {} does not divide the fine grid", n));
  struct Acc {
    std::vector<OrderPoint> points;
    void merge(const Acc& o) { detail::merge_elementwise(points, o.points); }
  };
  Acc init;
  for (int n : n_list) init.points.push_back(OrderPoint{n, {}, {}});
  auto acc = run_ensemble(cfg, init, [&](std::uint64_t path, Acc& a) {
    const auto fine = sample_lattice(n_max, m, T, cfg.seed, path);
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      const auto lat = regrid(fine, n_list[i]);
      SchemeConfig s = scheme;
      s.n = n_list[i];
      const auto traj = integrate(problem, s, lat);
      const auto err = strong_error(traj, exact_coarse_path(problem, lat));
      a.points[i].terminal_sq.add(err.terminal * err.terminal);
      a.points[i].sup.add(err.sup);
    }
  });
  OrderStudy out{std::move(acc.points), 0.0};
  std::vector<std::pair<double, double>> pairs;
  for (const auto& p : out.points) pairs.emplace_back(p.n, p.rms());
  out.slope = empirical_order(pairs);
  return out;
}

struct ModifiedGapPoint {
  int n = 0;
  int m = 0;
  StreamingMoments sup_gap;  ///< max over coarse nodes of |X̃^n − X^n|
  void merge(const ModifiedGapPoint& o) { sup_gap.merge(o.sup_gap); }
};

/// E[sup-node |X̃^n − scheme|] for the symplectic Euler scheme and its
/// truncated modified equation driven by the same lattice.
template <int D>
  requires(D == 1)
std::vector<ModifiedGapPoint> modified_gap_study(const Problem<D>& problem, const std::vector<int>& n_list, int T,
                                                 const EnsembleConfig& cfg, int fixed_m = 0) {
  struct Acc {
    std::vector<ModifiedGapPoint> points;
    void merge(const Acc& o) { detail::merge_elementwise(points, o.points); }
  };
  Acc init;
  for (int n : n_list) init.points.push_back({n, fixed_m > 0 ? fixed_m : modified_refinement(n), {}});
  auto acc = run_ensemble(cfg, init, [&](std::uint64_t path, Acc& a) {
    for (auto& pt : a.points) {
      const auto lat = sample_lattice(pt.n, pt.m, T, cfg.seed, path);
      SchemeConfig s{SymplTheta{1.0}, pt.n};
      const auto traj = integrate(problem, s, lat);
      const auto me = integrate_modified(problem, pt.n, lat);
      pt.sup_gap.add(sup_node_gap(me, traj));
    }
  });
  return std::move(acc.points);
}

/// Terminal normalized errors of the modified equation and of the scheme,
/// coupled on the same W. Each record is (ME error, scheme error), P then Q.
struct ModifiedErrorPair {
  std::vector<double> modified;
  std::vector<double> scheme;
};

template <int D>
  requires(D == 1)
std::vector<ModifiedErrorPair> modified_error_samples(const Problem<D>& problem, int n, int T,
                                                      const EnsembleConfig& cfg, int fixed_m = 0) {
  const int m = fixed_m > 0 ? fixed_m : modified_refinement(n);
  const double scale = std::pow(static_cast<double>(n), normalization_exponent(problem.coeffs.noise_kind));
  auto out = run_ensemble(cfg, Collector<ModifiedErrorPair>{}, [&](std::uint64_t path, Collector<ModifiedErrorPair>& acc) {
    const auto lat = sample_lattice(n, m, T, cfg.seed, path);
    const auto exact = exact_coarse_path(problem, lat);
    const auto traj = integrate(problem, SchemeConfig{SymplTheta{1.0}, n}, lat);
    const auto me = integrate_modified(problem, n, lat);
    const PhaseVec<D> e_me = scale * (me.states.back().stacked() - exact.back().stacked());
    const PhaseVec<D> e_sc = scale * (traj.states.back().stacked() - exact.back().stacked());
    acc.items.push_back({{e_me.data(), e_me.data() + e_me.size()}, {e_sc.data(), e_sc.data() + e_sc.size()}});
  });
  return std::move(out.items);
}

struct TruncationDiagnostics {
  std::size_t draws = 0;
  std::size_t clamps = 0;
  double clamp_rate = 0.0;
  double expected_rate = 0.0;   ///< 2Φ(−A_n)
  double mean_sq_excess = 0.0;  ///< E|ξ − ζ|²
  double level = 0.0;           ///< A_n
};

/// Clamp statistics of the standardized coarse increments over an ensemble
/// of lattices at resolution n with horizon T.
inline TruncationDiagnostics truncation_diagnostics(const TruncationPolicy& policy, int n, int T,
                                                    const EnsembleConfig& cfg) {
  struct Acc {
    std::size_t draws = 0, clamps = 0;
    double excess = 0.0;
    void merge(const Acc& o) {
      draws += o.draws;
      clamps += o.clamps;
      excess += o.excess;
    }
  };
  const double A = policy.level(n);
  const double root_n = std::sqrt(static_cast<double>(n));
  auto acc = run_ensemble(cfg, Acc{}, [&](std::uint64_t path, Acc& a) {
    const auto lat = sample_lattice(n, 1, T, cfg.seed, path);
    const auto tr = truncate(lat.dW_fine, policy, n);
    a.draws += tr.increments.size();
    a.clamps += tr.clamp_count;
    for (std::size_t k = 0; k < tr.increments.size(); ++k) {
      const double diff = root_n * (lat.dW_fine[k] - tr.increments[k]);
      a.excess += diff * diff;
    }
  });
  TruncationDiagnostics d;
  d.draws = acc.draws;
  d.clamps = acc.clamps;
  d.level = A;
  d.clamp_rate = static_cast<double>(acc.clamps) / static_cast<double>(acc.draws);
  d.expected_rate = std::erfc(A / std::numbers::sqrt2);
  d.mean_sq_excess = acc.excess / static_cast<double>(acc.draws);
  return d;
}

/// Fraction of paths leaving Ω^n, per n, on lattices with m fine points per cell.
inline std::vector<double> omega_frequencies(const std::vector<int>& n_list, int m, int T, const OmegaProbe& probe,
                                             const EnsembleConfig& cfg) {
  struct Acc {
    std::vector<std::size_t> hits;
    void merge(const Acc& o) {
      for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += o.hits[i];
    }
  };
  auto acc = run_ensemble(cfg, Acc{std::vector<std::size_t>(n_list.size(), 0)}, [&](std::uint64_t path, Acc& a) {
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      const auto lat = sample_lattice(n_list[i], m, T, cfg.seed, path);
      a.hits[i] += outside_omega(lat, probe.threshold(n_list[i])) ? 1 : 0;
    }
  });
  std::vector<double> out;
  for (auto h : acc.hits) out.push_back(static_cast<double>(h) / static_cast<double>(cfg.paths));
  return out;
}

/// One line of the statistics CSV.
struct StatRow {
  std::string job_id;
  std::string problem;
  std::string method;
  double theta = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
  double t = 0.0;
  std::size_t M = 0;
  std::string statistic_name;
  double value = 0.0;
  double ci_halfwidth = std::numeric_limits<double>::quiet_NaN();
};

inline void write_stats_header(std::ostream& os) {
  os << "job_id,problem,method,theta,n,t,M,statistic_name,value,ci_halfwidth\n";
}

inline std::string format_field(double x) { return std::isnan(x) ? std::string() : fmt::format("{:.17g}", x); }

inline void write_stats_row(std::ostream& os, const StatRow& r) {
  os << r.job_id << ',' << r.problem << ',' << r.method << ',' << format_field(r.theta) << ',' << r.n << ','
     << format_field(r.t) << ',' << r.M << ',' << r.statistic_name << ',' << format_field(r.value) << ','
     << format_field(r.ci_halfwidth) << '\n';
}

inline void write_stats_csv(std::ostream& os, const std::vector<StatRow>& rows) {
  write_stats_header(os);
  for (const auto& r : rows) write_stats_row(os, r);
}

inline std::string method_label(const SchemeConfig& s) { return s.is_theta() ? "sympl" : "euler"; }

/// Rows for mean_scaled (n^p E[ΔH]) and second_moment_scaled (n^{2p} E[ΔH²]).
inline std::vector<StatRow> hamdev_rows(const HamdevStudy& st, const std::string& job_id, const std::string& problem,
                                        std::size_t M) {
  std::vector<StatRow> rows;
  for (std::size_t s = 0; s < st.schemes.size(); ++s)
    for (std::size_t j = 0; j < st.times.size(); ++j) {
      const auto& cell = st.at(s, j);
      const auto& sc = st.schemes[s];
      const double theta = sc.is_theta() ? sc.theta() : std::numeric_limits<double>::quiet_NaN();
      const auto ci1 = confidence_interval(cell.scaled);
      const auto ci2 = confidence_interval(cell.squared);
      rows.push_back({job_id, problem, method_label(sc), theta, st.n, st.times[j], M, "mean_scaled", ci1.mean,
                      ci1.halfwidth});
      rows.push_back({job_id, problem, method_label(sc), theta, st.n, st.times[j], M, "second_moment_scaled",
                      ci2.mean, ci2.halfwidth});
    }
  return rows;
}

}  // namespace shs

#endif  // SHS_MONTECARLO_HPP
