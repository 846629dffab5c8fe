#ifndef SHS_INTEGRATORS_HPP
#define SHS_INTEGRATORS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "noise_lattice.hpp"
#include "problem_model.hpp"

namespace shs {

struct SymplTheta {
  double theta = 1.0;
};
struct EulerMaruyama {};
using Method = std::variant<SymplTheta, EulerMaruyama>;

enum class SolverMode { FixedPoint, NewtonFallback };

struct ImplicitSolverConfig {
  SolverMode mode = SolverMode::NewtonFallback;
  double abs_tol = 1e-13;
  int max_iter = 50;
  /// Relaxation of the fixed-point update; 1 is plain Picard.
  double damping = 1.0;

  void validate() const {
    if (!(abs_tol > 0.0)) throw std::invalid_argument("solver abs_tol must be > 0");
    if (max_iter < 1) throw std::invalid_argument("solver max_iter must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("solver damping must lie in (0, 1]");
  }
};

/// Auto truncates for the θ-family under multiplicative noise only; the
/// additive θ-scheme and the Euler baseline take raw increments.
enum class TruncationMode { Auto, Always, Never };

struct SchemeConfig {
  Method method = SymplTheta{1.0};
  int n = 100;
  TruncationPolicy truncation{};
  TruncationMode truncation_mode = TruncationMode::Auto;
  ImplicitSolverConfig solver{};

  void validate() const {
    if (n < 2) throw std::invalid_argument("scheme n must be >= 2");
    if (const auto* s = std::get_if<SymplTheta>(&method); s && !(s->theta >= 0.0 && s->theta <= 1.0))
      throw std::invalid_argument("theta must lie in [0, 1]");
    solver.validate();
  }

  bool is_theta() const { return std::holds_alternative<SymplTheta>(method); }
  double theta() const { return is_theta() ? std::get<SymplTheta>(method).theta : 0.0; }

  bool truncates(NoiseKind kind) const {
    switch (truncation_mode) {
      case TruncationMode::Always: return true;
      case TruncationMode::Never: return false;
      case TruncationMode::Auto: break;
    }
    return is_theta() && kind == NoiseKind::Multiplicative;
  }
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(int iterations, double residual, long step_index = -1)
      : std::runtime_error(describe(iterations, residual, step_index)),
        iterations_(iterations),
        residual_(residual),
        step_index_(step_index) {}

  int iterations() const { return iterations_; }
  double residual() const { return residual_; }
  long step_index() const { return step_index_; }

  NonConvergence at_step(long k) const { return {iterations_, residual_, k}; }

 private:
  static std::string describe(int it, double r, long k) {
    std::string s = fmt::format("implicit step did not converge: {} iterations, residual {:.3e}", it, r);
    if (k >= 0) s += fmt::format(" at step {}", k);
    return s;
  }
  int iterations_;
  double residual_;
  long step_index_;
};

template <int D>
struct StepReport {
  StateVector<D> state;
  int iterations = 0;
  double residual = 0.0;
};

/// The map X* ↦ X_k + drift(interior)·h + σ(interior)·dW whose fixed point
/// is one θ-step. Interior point: (θP* + (1−θ)P_k, (1−θ)Q* + θQ_k).
template <int D>
PhaseVec<D> theta_step_map(const CoefficientSet<D>& c, const StateVector<D>& xk, double h, double dw, double theta,
                           const PhaseVec<D>& x_star) {
  const Vec<D> P = theta * x_star.template head<D>() + (1.0 - theta) * xk.P;
  const Vec<D> Q = (1.0 - theta) * x_star.template tail<D>() + theta * xk.Q;
  Vec<D> fd = c.f(P, Q);
  Vec<D> gd = c.g(P, Q);
  const Vec<D> a = c.a(P, Q);
  const Vec<D> b = c.b(P, Q);
  if (c.noise_kind == NoiseKind::Multiplicative && theta != 0.5) {
    const double w = 0.5 - theta;
    fd += w * (c.jac_a_P(P, Q) * a - c.jac_a_Q(P, Q) * b);
    gd += w * (c.jac_b_P(P, Q) * a - c.jac_b_Q(P, Q) * b);
  }
  PhaseVec<D> out;
  out << xk.P + fd * h + a * dw, xk.Q + gd * h + b * dw;
  return out;
}

/// Max-norm residual of the θ-step equation at a candidate X*.
template <int D>
double theta_step_residual(const CoefficientSet<D>& c, const StateVector<D>& xk, double h, double dw, double theta,
                           const StateVector<D>& candidate) {
  const PhaseVec<D> x = candidate.stacked();
  return (x - theta_step_map(c, xk, h, dw, theta, x)).template lpNorm<Eigen::Infinity>();
}

namespace detail {
inline bool small_enough(double residual, double tol, double scale) { return residual <= tol * std::max(1.0, scale); }
}  // namespace detail

/// One θ-step with solver diagnostics. Throws NonConvergence.
template <int D>
StepReport<D> step_sympl_theta_detailed(const CoefficientSet<D>& c, const StateVector<D>& xk, double h, double dw,
                                        double theta, const ImplicitSolverConfig& solver = {}) {
  using V = PhaseVec<D>;
  auto G = [&](const V& x) { return theta_step_map(c, xk, h, dw, theta, x); };

  V x = G(xk.stacked());
  int it = 1;
  double residual = std::numeric_limits<double>::infinity();
  const int picard_budget = solver.mode == SolverMode::FixedPoint ? solver.max_iter : std::max(1, solver.max_iter / 2);
  for (; it <= solver.max_iter; ++it) {
    const V gx = G(x);
    residual = (x - gx).template lpNorm<Eigen::Infinity>();
    if (!std::isfinite(residual)) break;
    if (detail::small_enough(residual, solver.abs_tol, x.template lpNorm<Eigen::Infinity>()))
      return {StateVector<D>::from_stacked(x), it, residual};
    if (it >= picard_budget) break;
    x = x + solver.damping * (gx - x);
  }

  if (solver.mode == SolverMode::NewtonFallback && std::isfinite(residual)) {
    for (++it; it <= solver.max_iter; ++it) {
      const V gx = G(x);
      const V F = x - gx;
      residual = F.template lpNorm<Eigen::Infinity>();
      if (!std::isfinite(residual)) break;
      if (detail::small_enough(residual, solver.abs_tol, x.template lpNorm<Eigen::Infinity>()))
        return {StateVector<D>::from_stacked(x), it, residual};
      PhaseMat<D> J;
      for (int j = 0; j < 2 * D; ++j) {
        const double step = 1e-7 * std::max(1.0, std::abs(x(j)));
        V xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        J.col(j) = ((xp - G(xp)) - (xm - G(xm))) / (2.0 * step);
      }
      x -= J.partialPivLu().solve(F);
    }
  }
  throw NonConvergence(std::min(it, solver.max_iter), residual);
}

template <int D>
StateVector<D> step_sympl_theta(const CoefficientSet<D>& c, const StateVector<D>& xk, double h, double dw_hat,
                                double theta, const ImplicitSolverConfig& solver = {}) {
  return step_sympl_theta_detailed(c, xk, h, dw_hat, theta, solver).state;
}

template <int D>
StateVector<D> step_euler_maruyama(const CoefficientSet<D>& c, const StateVector<D>& xk, double h, double dw) {
  const StateVector<D> mu = ito_drift(c, xk);
  return {xk.P + mu.P * h + c.a(xk.P, xk.Q) * dw, xk.Q + mu.Q * h + c.b(xk.P, xk.Q) * dw};
}

template <int D>
struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector<D>> states;
  long total_iterations = 0;
  std::size_t clamp_count = 0;
};

/// Scheme increments for a lattice: coarse sums, truncated when the scheme asks for it.
template <int D>
TruncationResult scheme_increments(const CoefficientSet<D>& c, const SchemeConfig& scheme, const BrownianLattice& lat) {
  auto coarse = coarse_increments(lat);
  if (!scheme.truncates(c.noise_kind)) return {std::move(coarse), 0};
  const TruncationPolicy on(scheme.truncation.rho(), true);
  return truncate(coarse, on, scheme.n);
}

template <int D>
Trajectory<D> integrate(const CoefficientSet<D>& c, const StateVector<D>& initial, const SchemeConfig& scheme,
                        const BrownianLattice& lat) {
  scheme.validate();
  if (lat.n != scheme.n)
    throw std::invalid_argument(fmt::format("lattice resolution {} does not match scheme n = {}", lat.n, scheme.n));
  const auto incr = scheme_increments(c, scheme, lat);
  const std::size_t steps = incr.increments.size();
  const double h = 1.0 / scheme.n;

  Trajectory<D> traj;
  traj.clamp_count = incr.clamp_count;
  traj.times.resize(steps + 1);
  traj.states.resize(steps + 1);
  traj.times[0] = 0.0;
  traj.states[0] = initial;
  const auto* theta_method = std::get_if<SymplTheta>(&scheme.method);
  for (std::size_t k = 0; k < steps; ++k) {
    traj.times[k + 1] = static_cast<double>(k + 1) / scheme.n;
    if (theta_method) {
      try {
        const auto r =
            step_sympl_theta_detailed(c, traj.states[k], h, incr.increments[k], theta_method->theta, scheme.solver);
        traj.states[k + 1] = r.state;
        traj.total_iterations += r.iterations;
      } catch (const NonConvergence& e) {
        throw e.at_step(static_cast<long>(k));
      }
    } else {
      traj.states[k + 1] = step_euler_maruyama(c, traj.states[k], h, incr.increments[k]);
    }
  }
  return traj;
}

template <int D>
Trajectory<D> integrate(const Problem<D>& problem, const SchemeConfig& scheme, const BrownianLattice& lat) {
  return integrate(problem.coeffs, problem.initial, scheme, lat);
}

/// Truncated one-step expansion of the symplectic Euler step (θ = 1) in the
/// scalar multiplicative setting. Needs Hessians of a and b.
template <int D>
  requires(D == 1)
StateVector<D> expansion_step_sympl_euler(const CoefficientSet<D>& c, const StateVector<D>& x, double h, double dw_hat) {
  if (c.noise_kind != NoiseKind::Multiplicative)
    throw std::invalid_argument("expansion step is defined for multiplicative noise");
  if (!c.has_hessians()) throw std::invalid_argument("expansion step needs Hessians of a and b");
  const auto& P = x.P;
  const auto& Q = x.Q;
  const double a = c.a(P, Q)(0), b = c.b(P, Q)(0);
  const double aP = c.jac_a_P(P, Q)(0), aQ = c.jac_a_Q(P, Q)(0);
  const double bP = c.jac_b_P(P, Q)(0), bQ = c.jac_b_Q(P, Q)(0);
  const auto Ha = c.hess_a(P, Q, 0);
  const auto Hb = c.hess_b(P, Q, 0);
  // u, v: θ = 1 modified drifts; du, dv: their P-derivatives.
  const double u = c.f(P, Q)(0) + 0.5 * aQ * b - 0.5 * aP * a;
  const double v = c.g(P, Q)(0) + 0.5 * bQ * b - 0.5 * bP * a;
  const double du = c.jac_f_P(P, Q)(0) + 0.5 * (Ha(1, 0) * b + aQ * bP) - 0.5 * (Ha(0, 0) * a + aP * aP);
  const double dv = c.jac_g_P(P, Q)(0) + 0.5 * (Hb(1, 0) * b + bQ * bP) - 0.5 * (Hb(0, 0) * a + bP * aP);
  const double h2 = h * h, w2 = dw_hat * dw_hat, hw = h * dw_hat;
  StateVector<D> out;
  out.P(0) = P(0) + u * h + a * dw_hat + du * u * h2 + aP * a * w2 + (du * a + aP * u) * hw;
  out.Q(0) = Q(0) + v * h + b * dw_hat + dv * u * h2 + bP * a * w2 + (dv * a + bP * u) * hw;
  return out;
}

/// Exact solution at every fine node of the lattice.
template <int D>
std::vector<StateVector<D>> exact_fine_path(const Problem<D>& problem, const BrownianLattice& lat) {
  const std::size_t N = lat.fine_steps();
  std::vector<StateVector<D>> out(N + 1);
  const double hf = lat.fine_step();
  if (problem.exact.kind == ExactKind::PointwiseOfW) {
    double W = 0.0;
    out[0] = problem.exact.pointwise(0.0, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      W += lat.dW_fine[i];
      out[i + 1] = problem.exact.pointwise(static_cast<double>(i + 1) * hf, W);
    }
  } else {
    out[0] = problem.initial;
    for (std::size_t i = 0; i < N; ++i)
      out[i + 1] = problem.exact.advance(out[i], hf, std::span<const double>(&lat.dW_fine[i], 1));
  }
  return out;
}

/// Exact solution at the coarse nodes, driven by the full fine path.
template <int D>
std::vector<StateVector<D>> exact_coarse_path(const Problem<D>& problem, const BrownianLattice& lat) {
  const std::size_t K = lat.coarse_steps();
  const auto m = static_cast<std::size_t>(lat.m);
  std::vector<StateVector<D>> out(K + 1);
  if (problem.exact.kind == ExactKind::PointwiseOfW) {
    double W = 0.0;
    out[0] = problem.exact.pointwise(0.0, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < m; ++j) W += lat.dW_fine[k * m + j];
      out[k + 1] = problem.exact.pointwise(static_cast<double>(k + 1) / lat.n, W);
    }
  } else {
    out[0] = problem.initial;
    const double hf = lat.fine_step();
    for (std::size_t k = 0; k < K; ++k)
      out[k + 1] = problem.exact.advance(out[k], hf, std::span<const double>(lat.dW_fine.data() + k * m, m));
  }
  return out;
}

struct StrongError {
  double sup = 0.0;
  double terminal = 0.0;
};

template <int D>
StrongError strong_error(const Trajectory<D>& traj, std::span<const StateVector<D>> reference) {
  if (reference.size() != traj.states.size())
    throw std::invalid_argument(
        fmt::format("grid mismatch: {} trajectory nodes vs {} reference nodes", traj.states.size(), reference.size()));
  StrongError e;
  for (std::size_t k = 0; k < reference.size(); ++k) {
    const double d = (traj.states[k].stacked() - reference[k].stacked()).norm();
    e.sup = std::max(e.sup, d);
    e.terminal = d;
  }
  return e;
}

template <int D>
StrongError strong_error(const Trajectory<D>& traj, const std::vector<StateVector<D>>& reference) {
  return strong_error(traj, std::span<const StateVector<D>>(reference));
}

namespace detail {
template <int D>
std::string state_header() {
  std::string h;
  for (int i = 1; i <= D; ++i) h += fmt::format(",P_{}", i);
  for (int i = 1; i <= D; ++i) h += fmt::format(",Q_{}", i);
  return h;
}
template <int D>
std::string state_fields(const StateVector<D>& x) {
  std::string s;
  for (int i = 0; i < D; ++i) s += fmt::format(",{:.17g}", x.P(i));
  for (int i = 0; i < D; ++i) s += fmt::format(",{:.17g}", x.Q(i));
  return s;
}
}  // namespace detail

template <int D>
void write_trajectory_csv(std::ostream& os, const Trajectory<D>& traj) {
  os << "t" << detail::state_header<D>() << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    os << fmt::format("{:.17g}", traj.times[k]) << detail::state_fields(traj.states[k]) << '\n';
}

}  // namespace shs

#endif  // SHS_INTEGRATORS_HPP
