#ifndef SHS_LIMIT_SDE_HPP
#define SHS_LIMIT_SDE_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "ensemble.hpp"
#include "integrators.hpp"
#include "noise_lattice.hpp"
#include "problem_model.hpp"
#include "rng.hpp"

namespace shs {

struct MultThetaScheme {
  double theta = 1.0;
};
struct MultEulerBaseline {};
struct AddThetaScheme {
  double theta = 1.0;
};
struct AddEulerBaseline {};
using LimitRegime = std::variant<MultThetaScheme, MultEulerBaseline, AddThetaScheme, AddEulerBaseline>;

inline NoiseKind regime_noise_kind(const LimitRegime& r) {
  return std::holds_alternative<MultThetaScheme>(r) || std::holds_alternative<MultEulerBaseline>(r)
             ? NoiseKind::Multiplicative
             : NoiseKind::Additive;
}

/// Limit regime matching a scheme on a problem of the given noise kind.
inline LimitRegime regime_for(const SchemeConfig& scheme, NoiseKind kind) {
  if (kind == NoiseKind::Multiplicative)
    return scheme.is_theta() ? LimitRegime{MultThetaScheme{scheme.theta()}} : LimitRegime{MultEulerBaseline{}};
  return scheme.is_theta() ? LimitRegime{AddThetaScheme{scheme.theta()}} : LimitRegime{AddEulerBaseline{}};
}

template <int D>
class LimitSpec {
 public:
  LimitSpec(LimitRegime regime, const Problem<D>& problem) : regime_(regime), problem_(&problem) {
    if (regime_noise_kind(regime) != problem.coeffs.noise_kind)
      throw std::invalid_argument("limit regime noise kind does not match the problem coefficients");
    if (!problem.coeffs.has_hessians()) throw std::invalid_argument("limit equations need coefficient Hessians");
    const double theta = std::visit(
        [](const auto& r) {
          if constexpr (requires { r.theta; }) return r.theta;
          return 0.5;
        },
        regime);
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in [0, 1]");
  }

  const LimitRegime& regime() const { return regime_; }
  const Problem<D>& problem() const { return *problem_; }
  const CoefficientSet<D>& coeffs() const { return problem_->coeffs; }

 private:
  LimitRegime regime_;
  const Problem<D>* problem_;
};

/// Coefficients of the linear U-equation at a fixed base state X (Itô form):
/// dU = (drift_matrix·U + drift_shift) dt + (noise_matrix·U + noise_shift) dW + aux_shift dB.
template <int D>
struct LinearUCoefficients {
  PhaseMat<D> drift_matrix = PhaseMat<D>::Zero();
  PhaseVec<D> drift_shift = PhaseVec<D>::Zero();
  PhaseMat<D> noise_matrix = PhaseMat<D>::Zero();
  PhaseVec<D> noise_shift = PhaseVec<D>::Zero();
  PhaseVec<D> aux_shift = PhaseVec<D>::Zero();
};

namespace detail {

/// Rows i of [α·∂F/∂P·a + β·∂F/∂Q·b] for F = (f; g).
template <int D>
PhaseVec<D> drift_contraction(const PhaseMat<D>& Jfg, const Vec<D>& a, const Vec<D>& b, double alpha, double beta) {
  return alpha * Jfg.template leftCols<D>() * a + beta * Jfg.template rightCols<D>() * b;
}

/// Component i of c_pp·aᵀF_PP a + c_pq·aᵀF_PQ b + c_qq·bᵀF_QQ b for F = (f; g).
template <int D>
PhaseVec<D> hessian_contraction(const CoefficientSet<D>& c, const StateVector<D>& x, const Vec<D>& a,
                                const Vec<D>& b, double c_pp, double c_pq, double c_qq) {
  PhaseVec<D> out;
  for (int i = 0; i < 2 * D; ++i) {
    const PhaseMat<D> H = drift_hessian(c, x, i);
    out(i) = c_pp * a.dot(H.template topLeftCorner<D, D>() * a) + c_pq * a.dot(H.template topRightCorner<D, D>() * b) +
             c_qq * b.dot(H.template bottomRightCorner<D, D>() * b);
  }
  return out;
}

/// Σ_k ∂(noise_shift)/∂X_k σ_k for additive regimes where
/// noise_shift = α F_P a + β F_Q b with constant a, b.
template <int D>
PhaseVec<D> additive_shift_derivative(const CoefficientSet<D>& c, const StateVector<D>& x, const Vec<D>& a,
                                      const Vec<D>& b, double alpha, double beta) {
  PhaseVec<D> sigma, a_only = PhaseVec<D>::Zero(), b_only = PhaseVec<D>::Zero();
  sigma << a, b;
  a_only.template head<D>() = a;
  b_only.template tail<D>() = b;
  PhaseVec<D> out;
  for (int i = 0; i < 2 * D; ++i) {
    const PhaseMat<D> H = drift_hessian(c, x, i);
    out(i) = sigma.dot(H * (alpha * a_only + beta * b_only));
  }
  return out;
}

struct AdditiveWeights {
  double noise_alpha, noise_beta;  // dW shift: α F_P a + β F_Q b
};

template <int D>
AdditiveWeights additive_noise_weights(const LimitRegime& r) {
  if (const auto* s = std::get_if<AddThetaScheme>(&r)) return {s->theta - 0.5, -(s->theta - 0.5)};
  return {-0.5, -0.5};
}

}  // namespace detail

template <int D>
LinearUCoefficients<D> limit_coefficients(const LimitSpec<D>& spec, const StateVector<D>& x) {
  const auto& c = spec.coeffs();
  LinearUCoefficients<D> L;
  const Vec<D> a = c.a(x.P, x.Q);
  const Vec<D> b = c.b(x.P, x.Q);
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;

  if (regime_noise_kind(spec.regime()) == NoiseKind::Multiplicative) {
    const PhaseMat<D> Js = diffusion_jacobian(c, x);
    L.drift_matrix = ito_drift_jacobian(c, x);
    L.noise_matrix = Js;
    if (const auto* s = std::get_if<MultThetaScheme>(&spec.regime())) {
      // (a_P a − a_Q b; b_P a − b_Q b)
      PhaseVec<D> kappa;
      kappa << Js.template topLeftCorner<D, D>() * a - Js.template topRightCorner<D, D>() * b,
          Js.template bottomLeftCorner<D, D>() * a - Js.template bottomRightCorner<D, D>() * b;
      L.aux_shift = (2.0 * s->theta - 1.0) * inv_sqrt2 * kappa;
    } else {
      L.aux_shift = -inv_sqrt2 * (Js * diffusion_field(c, x));
    }
    return L;
  }

  const PhaseMat<D> Jfg = drift_jacobian(c, x);
  PhaseVec<D> drift;
  drift << c.f(x.P, x.Q), c.g(x.P, x.Q);
  const Vec<D> f = drift.template head<D>();
  const Vec<D> g = drift.template tail<D>();
  L.drift_matrix = Jfg;
  L.aux_shift = -(std::sqrt(3.0) / 6.0) * detail::drift_contraction<D>(Jfg, a, b, 1.0, 1.0);
  if (const auto* s = std::get_if<AddThetaScheme>(&spec.regime())) {
    const double th = s->theta;
    L.drift_shift = (th - 0.5) * detail::drift_contraction<D>(Jfg, f, g, 1.0, -1.0) +
                    detail::hessian_contraction(c, x, a, b, 0.5 * th * th - 0.25, th * (1.0 - th) - 0.5,
                                                0.5 * (1.0 - th) * (1.0 - th) - 0.25);
    L.noise_shift = (th - 0.5) * detail::drift_contraction<D>(Jfg, a, b, 1.0, -1.0);
  } else {
    L.drift_shift = -0.5 * detail::drift_contraction<D>(Jfg, f, g, 1.0, 1.0) -
                    0.25 * detail::hessian_contraction(c, x, a, b, 1.0, 2.0, 1.0);
    L.noise_shift = -0.5 * detail::drift_contraction<D>(Jfg, a, b, 1.0, 1.0);
  }
  return L;
}

/// Same equation with the W-integrals in Stratonovich form. B is independent
/// of everything, so its column is unchanged.
template <int D>
LinearUCoefficients<D> limit_coefficients_stratonovich(const LimitSpec<D>& spec, const StateVector<D>& x) {
  const auto& c = spec.coeffs();
  LinearUCoefficients<D> L = limit_coefficients(spec, x);
  if (regime_noise_kind(spec.regime()) == NoiseKind::Multiplicative) {
    // noise_matrix = ∂σ; its derivative along σ is Σ_k ∂²σ/∂X∂X_k σ_k.
    const PhaseVec<D> sigma = diffusion_field(c, x);
    PhaseMat<D> along;
    for (int i = 0; i < 2 * D; ++i) along.row(i) = (diffusion_hessian(c, x, i) * sigma).transpose();
    L.drift_matrix -= 0.5 * (L.noise_matrix * L.noise_matrix + along);
    return L;
  }
  const Vec<D> a = c.a(x.P, x.Q);
  const Vec<D> b = c.b(x.P, x.Q);
  const auto w = detail::additive_noise_weights<D>(spec.regime());
  L.drift_shift -= 0.5 * detail::additive_shift_derivative(c, x, a, b, w.noise_alpha, w.noise_beta);
  return L;
}

template <int D>
struct LimitPath {
  std::vector<double> times;
  std::vector<StateVector<D>> U;
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
};

/// Euler–Maruyama for the U-equation on the lattice's fine grid, with
/// coefficients frozen at the exact state of each left node.
template <int D>
LimitPath<D> simulate_limit(const LimitSpec<D>& spec, const std::vector<StateVector<D>>& exact_fine,
                            const BrownianLattice& lat) {
  if (!lat.has_B()) throw std::invalid_argument("limit simulation needs B increments on the lattice");
  const std::size_t N = lat.fine_steps();
  if (exact_fine.size() != N + 1) throw std::invalid_argument("exact path must cover every fine node of the lattice");
  const double hf = lat.fine_step();
  LimitPath<D> out;
  out.seed = lat.seed;
  out.path_id = lat.path_id;
  out.times.resize(N + 1);
  out.U.resize(N + 1);
  PhaseVec<D> U = PhaseVec<D>::Zero();
  out.U[0] = StateVector<D>::from_stacked(U);
  for (std::size_t i = 0; i < N; ++i) {
    const auto L = limit_coefficients(spec, exact_fine[i]);
    U += (L.drift_matrix * U + L.drift_shift) * hf + (L.noise_matrix * U + L.noise_shift) * lat.dW_fine[i] +
         L.aux_shift * lat.dB_fine[i];
    out.times[i + 1] = static_cast<double>(i + 1) * hf;
    out.U[i + 1] = StateVector<D>::from_stacked(U);
  }
  return out;
}

struct H012 {
  double H0 = 0.0, H1 = 0.0, H2 = 0.0;
};

namespace detail {
/// U_Pᵀ c_Q − U_Qᵀ c_P: the Hamiltonian whose canonical field is the constant c.
template <int D>
double linear_hamiltonian(const PhaseVec<D>& U, const PhaseVec<D>& c) {
  return U.template head<D>().dot(c.template tail<D>()) - U.template tail<D>().dot(c.template head<D>());
}
}  // namespace detail

/// H0 = ½UᵀD²H U + linear part of the Stratonovich drift, H1 = ½UᵀD²H̄ U + linear
/// part of the dW column, H2 = linear part of the dB column.
template <int D>
H012 assemble_H012(const LimitSpec<D>& spec, const StateVector<D>& x, const StateVector<D>& U) {
  const auto& hams = spec.problem().hamiltonians;
  const auto L = limit_coefficients_stratonovich(spec, x);
  const PhaseVec<D> u = U.stacked();
  H012 h;
  h.H0 = 0.5 * u.dot(hams.hess_H(x.P, x.Q) * u) + detail::linear_hamiltonian<D>(u, L.drift_shift);
  h.H1 = 0.5 * u.dot(hams.hess_H_bar(x.P, x.Q) * u) + detail::linear_hamiltonian<D>(u, L.noise_shift);
  h.H2 = detail::linear_hamiltonian<D>(u, L.aux_shift);
  return h;
}

/// Canonical basis ± and `random_count` Gaussian directions (fixed seed).
template <int D>
std::vector<StateVector<D>> structure_probes(std::size_t random_count = 8, std::uint64_t seed = 7) {
  std::vector<StateVector<D>> probes;
  for (int j = 0; j < 2 * D; ++j)
    for (double s : {1.0, -1.0}) {
      PhaseVec<D> e = PhaseVec<D>::Zero();
      e(j) = s;
      probes.push_back(StateVector<D>::from_stacked(e));
    }
  NormalStream normals(seed, 0, MotionTag::Aux);
  for (std::size_t r = 0; r < random_count; ++r) {
    PhaseVec<D> v;
    for (int j = 0; j < 2 * D; ++j) v(j) = normals();
    probes.push_back(StateVector<D>::from_stacked(v));
  }
  return probes;
}

/// Max-norm gap between the Stratonovich fields of the U-equation and the
/// canonical fields (−∂H_i/∂U_Q, ∂H_i/∂U_P) of the assembled H0, H1, H2
/// (dt ↔ H0, dW ↔ H1, dB ↔ H2), over the probe directions.
template <int D>
double check_hamiltonian_structure(const LimitSpec<D>& spec, const StateVector<D>& x,
                                   const std::vector<StateVector<D>>& probes = structure_probes<D>()) {
  const auto L = limit_coefficients_stratonovich(spec, x);
  double worst = 0.0;
  for (const auto& probe : probes) {
    const PhaseVec<D> u = probe.stacked();
    // Central differences are exact for these quadratic forms up to rounding.
    constexpr double step = 0.5;
    std::array<PhaseVec<D>, 3> grad;
    for (auto& g : grad) g.setZero();
    for (int j = 0; j < 2 * D; ++j) {
      PhaseVec<D> up = u, um = u;
      up(j) += step;
      um(j) -= step;
      const H012 hp = assemble_H012(spec, x, StateVector<D>::from_stacked(up));
      const H012 hm = assemble_H012(spec, x, StateVector<D>::from_stacked(um));
      grad[0](j) = (hp.H0 - hm.H0) / (2 * step);
      grad[1](j) = (hp.H1 - hm.H1) / (2 * step);
      grad[2](j) = (hp.H2 - hm.H2) / (2 * step);
    }
    auto canonical = [](const PhaseVec<D>& gr) {
      PhaseVec<D> v;
      v << -gr.template tail<D>(), gr.template head<D>();
      return v;
    };
    const std::array<PhaseVec<D>, 3> fields{L.drift_matrix * u + L.drift_shift, L.noise_matrix * u + L.noise_shift,
                                            L.aux_shift};
    for (int i = 0; i < 3; ++i)
      worst = std::max(worst, (fields[i] - canonical(grad[i])).template lpNorm<Eigen::Infinity>());
  }
  return worst;
}

/// Fine grid used for limit-equation simulation: the display resolution n
/// with m substeps per coarse cell.
struct LimitGrid {
  int n_display = 100;
  int m = 32;
};

namespace detail {
inline std::size_t node_index(double t, double per_unit) {
  const double x = t * per_unit;
  const double r = std::round(x);
  if (t < 0.0 || std::abs(x - r) > 1e-9 * std::max(1.0, x))
    throw std::invalid_argument(fmt::format("time {} is not a grid node (step 1/{})", t, per_unit));
  return static_cast<std::size_t>(r);
}
inline int horizon_for(double t) { return std::max(1, static_cast<int>(std::ceil(t - 1e-12))); }
}  // namespace detail

struct LimitSample {
  std::uint64_t path_id = 0;
  double t = 0.0;
  std::vector<double> U;  ///< U_P then U_Q
  double W_t = 0.0;
  double B_t = 0.0;
  double hamdev = 0.0;  ///< ∇H(X_t)·U_t
};

/// Per path: lattice with W and B, exact fine path, U via simulate_limit, and
/// the linearized Hamiltonian deviation ∇_P H·U_P + ∇_Q H·U_Q at t.
template <int D>
std::vector<LimitSample> limit_samples(const LimitSpec<D>& spec, double t, const EnsembleConfig& cfg,
                                       const LimitGrid& grid = {}) {
  const int T = detail::horizon_for(t);
  const std::size_t idx = detail::node_index(t, static_cast<double>(grid.n_display) * grid.m);
  const auto& problem = spec.problem();
  auto run = run_ensemble(cfg, Collector<LimitSample>{}, [&](std::uint64_t path, Collector<LimitSample>& acc) {
    const auto lat = sample_lattice(grid.n_display, grid.m, T, cfg.seed, path, true);
    const auto exact = exact_fine_path(problem, lat);
    const auto U = simulate_limit(spec, exact, lat);
    LimitSample s;
    s.path_id = path;
    s.t = t;
    const auto& u = U.U[idx];
    for (int i = 0; i < D; ++i) s.U.push_back(u.P(i));
    for (int i = 0; i < D; ++i) s.U.push_back(u.Q(i));
    for (std::size_t i = 0; i < idx; ++i) {
      s.W_t += lat.dW_fine[i];
      s.B_t += lat.dB_fine[i];
    }
    const auto grad = problem.hamiltonians.grad_H(exact[idx].P, exact[idx].Q);
    s.hamdev = grad.P.dot(u.P) + grad.Q.dot(u.Q);
    acc.items.push_back(std::move(s));
  });
  return std::move(run.items);
}

template <int D>
std::vector<double> hamdev_limit_samples(const LimitSpec<D>& spec, double t, const EnsembleConfig& cfg,
                                         const LimitGrid& grid = {}) {
  std::vector<double> out;
  for (const auto& s : limit_samples(spec, t, cfg, grid)) out.push_back(s.hamdev);
  return out;
}

inline void write_limit_samples_csv(std::ostream& os, const std::vector<LimitSample>& samples) {
  const std::size_t width = samples.empty() ? 2 : samples.front().U.size();
  const std::size_t d = width / 2;
  os << "path_id,t";
  for (std::size_t i = 1; i <= d; ++i) os << ",U_P_" << i;
  for (std::size_t i = 1; i <= d; ++i) os << ",U_Q_" << i;
  os << ",W_t,B_t\n";
  for (const auto& s : samples) {
    os << s.path_id << fmt::format(",{:.17g}", s.t);
    for (double u : s.U) os << fmt::format(",{:.17g}", u);
    os << fmt::format(",{:.17g},{:.17g}\n", s.W_t, s.B_t);
  }
}

}  // namespace shs

#endif  // SHS_LIMIT_SDE_HPP
