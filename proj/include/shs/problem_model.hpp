#ifndef SHS_PROBLEM_MODEL_HPP
#define SHS_PROBLEM_MODEL_HPP

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

namespace shs {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;
template <int D>
using Mat = Eigen::Matrix<double, D, D>;
/// Vector over phase space, ordered (P, Q).
template <int D>
using PhaseVec = Eigen::Matrix<double, 2 * D, 1>;
/// Matrix over phase space, blocks ordered (P, Q).
template <int D>
using PhaseMat = Eigen::Matrix<double, 2 * D, 2 * D>;

enum class NoiseKind { Multiplicative, Additive };

template <int D>
struct StateVector {
  Vec<D> P = Vec<D>::Zero();
  Vec<D> Q = Vec<D>::Zero();

  PhaseVec<D> stacked() const {
    PhaseVec<D> x;
    x << P, Q;
    return x;
  }

  static StateVector from_stacked(const PhaseVec<D>& x) {
    return {x.template head<D>(), x.template tail<D>()};
  }

  bool finite() const { return P.allFinite() && Q.allFinite(); }

  friend bool operator==(const StateVector& l, const StateVector& r) { return l.P == r.P && l.Q == r.Q; }
};

/// Coefficients of dP = f dt + a ∘ dW, dQ = g dt + b ∘ dW with all the
/// derivatives the schemes, limit equations and modified equations need.
/// Jacobians are d×d blocks (row i = gradient of component i). Hessians are
/// per component over phase space (P, Q).
template <int D>
struct CoefficientSet {
  using VecField = std::function<Vec<D>(const Vec<D>&, const Vec<D>&)>;
  using MatField = std::function<Mat<D>(const Vec<D>&, const Vec<D>&)>;
  using HessField = std::function<PhaseMat<D>(const Vec<D>&, const Vec<D>&, int)>;

  static constexpr int dim = D;

  VecField f, g, a, b;
  MatField jac_f_P, jac_f_Q, jac_g_P, jac_g_Q;
  MatField jac_a_P, jac_a_Q, jac_b_P, jac_b_Q;
  HessField hess_f, hess_g, hess_a, hess_b;
  NoiseKind noise_kind = NoiseKind::Multiplicative;

  bool has_hessians() const { return hess_f && hess_g && hess_a && hess_b; }
};

template <int D>
PhaseVec<D> drift_field(const CoefficientSet<D>& c, const StateVector<D>& x) {
  PhaseVec<D> out;
  out << c.f(x.P, x.Q), c.g(x.P, x.Q);
  return out;
}

template <int D>
PhaseVec<D> diffusion_field(const CoefficientSet<D>& c, const StateVector<D>& x) {
  PhaseVec<D> out;
  out << c.a(x.P, x.Q), c.b(x.P, x.Q);
  return out;
}

/// [[f_P, f_Q], [g_P, g_Q]]
template <int D>
PhaseMat<D> drift_jacobian(const CoefficientSet<D>& c, const StateVector<D>& x) {
  PhaseMat<D> J;
  J << c.jac_f_P(x.P, x.Q), c.jac_f_Q(x.P, x.Q), c.jac_g_P(x.P, x.Q), c.jac_g_Q(x.P, x.Q);
  return J;
}

/// [[a_P, a_Q], [b_P, b_Q]]
template <int D>
PhaseMat<D> diffusion_jacobian(const CoefficientSet<D>& c, const StateVector<D>& x) {
  PhaseMat<D> J;
  J << c.jac_a_P(x.P, x.Q), c.jac_a_Q(x.P, x.Q), c.jac_b_P(x.P, x.Q), c.jac_b_Q(x.P, x.Q);
  return J;
}

/// Hessian of phase-space component i (0 ≤ i < 2d) of the drift (f; g).
template <int D>
PhaseMat<D> drift_hessian(const CoefficientSet<D>& c, const StateVector<D>& x, int i) {
  return i < D ? c.hess_f(x.P, x.Q, i) : c.hess_g(x.P, x.Q, i - D);
}

template <int D>
PhaseMat<D> diffusion_hessian(const CoefficientSet<D>& c, const StateVector<D>& x, int i) {
  return i < D ? c.hess_a(x.P, x.Q, i) : c.hess_b(x.P, x.Q, i - D);
}

/// Itô drift of the Stratonovich system: (f,g) + ½ (∂σ/∂X) σ with σ = (a; b).
template <int D>
StateVector<D> ito_drift(const CoefficientSet<D>& c, const StateVector<D>& x) {
  const Vec<D> a = c.a(x.P, x.Q);
  const Vec<D> b = c.b(x.P, x.Q);
  StateVector<D> out;
  out.P = c.f(x.P, x.Q) + 0.5 * (c.jac_a_P(x.P, x.Q) * a + c.jac_a_Q(x.P, x.Q) * b);
  out.Q = c.g(x.P, x.Q) + 0.5 * (c.jac_b_P(x.P, x.Q) * a + c.jac_b_Q(x.P, x.Q) * b);
  return out;
}

/// Jacobian of the Itô drift: ∂(f,g) + ½ (Σ_k ∂²σ/∂X∂X_k σ_k + (∂σ)²).
/// Requires diffusion Hessians.
template <int D>
PhaseMat<D> ito_drift_jacobian(const CoefficientSet<D>& c, const StateVector<D>& x) {
  const PhaseVec<D> sigma = diffusion_field(c, x);
  const PhaseMat<D> Js = diffusion_jacobian(c, x);
  PhaseMat<D> second;
  for (int i = 0; i < 2 * D; ++i) second.row(i) = (diffusion_hessian(c, x, i) * sigma).transpose();
  return drift_jacobian(c, x) + 0.5 * (second + Js * Js);
}

/// Hamiltonians H (drift) and H̄ (diffusion) with gradients and Hessians.
template <int D>
struct HamiltonianPair {
  using Scalar = std::function<double(const Vec<D>&, const Vec<D>&)>;
  using Gradient = std::function<StateVector<D>(const Vec<D>&, const Vec<D>&)>;
  using Hessian = std::function<PhaseMat<D>(const Vec<D>&, const Vec<D>&)>;

  Scalar H, H_bar;
  Gradient grad_H, grad_H_bar;
  Hessian hess_H, hess_H_bar;
};

enum class ExactKind {
  PointwiseOfW,       ///< state at t depends only on (t, W_t)
  ConvolutionOnGrid,  ///< state needs every fine increment up to t
};

template <int D>
struct ExactSolution {
  ExactKind kind = ExactKind::PointwiseOfW;
  /// Valid for PointwiseOfW.
  std::function<StateVector<D>(double t, double W_t)> pointwise;
  /// Valid for ConvolutionOnGrid: advances the state across consecutive fine
  /// steps of width h driven by the given increments.
  std::function<StateVector<D>(const StateVector<D>&, double h, std::span<const double>)> advance;
};

template <int D>
struct Problem {
  std::string id;
  CoefficientSet<D> coeffs;
  HamiltonianPair<D> hamiltonians;
  ExactSolution<D> exact;
  StateVector<D> initial;
};

using Problem1 = Problem<1>;
using State1 = StateVector<1>;

namespace detail {
inline Vec<1> v1(double x) { return Vec<1>::Constant(x); }
inline Mat<1> m1(double x) { return Mat<1>::Constant(x); }
inline PhaseMat<1> zero_hessian(const Vec<1>&, const Vec<1>&, int) { return PhaseMat<1>::Zero(); }
inline double quadratic_energy(const Vec<1>& P, const Vec<1>& Q) { return 0.5 * (P.squaredNorm() + Q.squaredNorm()); }
inline StateVector<1> quadratic_energy_gradient(const Vec<1>& P, const Vec<1>& Q) { return {P, Q}; }
inline PhaseMat<1> quadratic_energy_hessian(const Vec<1>&, const Vec<1>&) { return PhaseMat<1>::Identity(); }
}  // namespace detail

/// Stochastic Kubo oscillator: f = -Q, g = P, a = -Q, b = P, H = H̄ = ½(P²+Q²),
/// started at (0, 1). Exact solution (−sin(t+W_t), cos(t+W_t)).
inline Problem1 make_kubo() {
  using detail::m1;
  using detail::v1;
  using V = Vec<1>;
  Problem1 p;
  p.id = "kubo";
  auto& c = p.coeffs;
  c.noise_kind = NoiseKind::Multiplicative;
  c.f = [](const V&, const V& Q) -> V { return -Q; };
  c.g = [](const V& P, const V&) -> V { return P; };
  c.a = [](const V&, const V& Q) -> V { return -Q; };
  c.b = [](const V& P, const V&) -> V { return P; };
  c.jac_f_P = [](const V&, const V&) { return m1(0.0); };
  c.jac_f_Q = [](const V&, const V&) { return m1(-1.0); };
  c.jac_g_P = [](const V&, const V&) { return m1(1.0); };
  c.jac_g_Q = [](const V&, const V&) { return m1(0.0); };
  c.jac_a_P = c.jac_f_P;
  c.jac_a_Q = c.jac_f_Q;
  c.jac_b_P = c.jac_g_P;
  c.jac_b_Q = c.jac_g_Q;
  c.hess_f = c.hess_g = c.hess_a = c.hess_b = detail::zero_hessian;

  p.hamiltonians.H = p.hamiltonians.H_bar = detail::quadratic_energy;
  p.hamiltonians.grad_H = p.hamiltonians.grad_H_bar = detail::quadratic_energy_gradient;
  p.hamiltonians.hess_H = p.hamiltonians.hess_H_bar = detail::quadratic_energy_hessian;

  p.exact.kind = ExactKind::PointwiseOfW;
  p.exact.pointwise = [](double t, double W) { return State1{v1(-std::sin(t + W)), v1(std::cos(t + W))}; };
  p.initial = {v1(0.0), v1(1.0)};
  return p;
}

/// Linear stochastic oscillator: f = -Q, g = P, additive noise (a, b) = (1, 0),
/// started at the origin. H = ½(P²+Q²), H̄ = -Q.
inline Problem1 make_linear_oscillator() {
  using detail::m1;
  using detail::v1;
  using V = Vec<1>;
  Problem1 p;
  p.id = "linosc";
  auto& c = p.coeffs;
  c.noise_kind = NoiseKind::Additive;
  c.f = [](const V&, const V& Q) -> V { return -Q; };
  c.g = [](const V& P, const V&) -> V { return P; };
  c.a = [](const V&, const V&) { return v1(1.0); };
  c.b = [](const V&, const V&) { return v1(0.0); };
  c.jac_f_P = [](const V&, const V&) { return m1(0.0); };
  c.jac_f_Q = [](const V&, const V&) { return m1(-1.0); };
  c.jac_g_P = [](const V&, const V&) { return m1(1.0); };
  c.jac_g_Q = [](const V&, const V&) { return m1(0.0); };
  c.jac_a_P = c.jac_a_Q = c.jac_b_P = c.jac_b_Q = [](const V&, const V&) { return m1(0.0); };
  c.hess_f = c.hess_g = c.hess_a = c.hess_b = detail::zero_hessian;

  auto& h = p.hamiltonians;
  h.H = detail::quadratic_energy;
  h.grad_H = detail::quadratic_energy_gradient;
  h.hess_H = detail::quadratic_energy_hessian;
  h.H_bar = [](const V&, const V& Q) { return -Q(0); };
  h.grad_H_bar = [](const V&, const V&) { return State1{v1(0.0), v1(-1.0)}; };
  h.hess_H_bar = [](const V&, const V&) { return PhaseMat<1>::Zero().eval(); };

  // Rotation by h plus the increment entering P: P_t = Σ cos(t-s_i) ΔW_i,
  // Q_t = Σ sin(t-s_i) ΔW_i.
  p.exact.kind = ExactKind::ConvolutionOnGrid;
  p.exact.advance = [](const State1& x, double step, std::span<const double> dW) {
    const double cs = std::cos(step);
    const double sn = std::sin(step);
    double P = x.P(0);
    double Q = x.Q(0);
    for (const double w : dW) {
      const double P_next = cs * P - sn * Q + w;
      Q = sn * P + cs * Q;
      P = P_next;
    }
    return State1{v1(P), v1(Q)};
  };
  p.initial = {v1(0.0), v1(0.0)};
  return p;
}

enum class BuiltinProblem { Kubo, LinOsc };
enum class MethodKind { Euler, SymplTheta };

inline BuiltinProblem parse_problem_id(std::string_view id) {
  if (id == "kubo") return BuiltinProblem::Kubo;
  if (id == "linosc") return BuiltinProblem::LinOsc;
  throw std::invalid_argument("unknown problem id '" + std::string(id) + "' (expected kubo|linosc)");
}

inline std::string_view problem_id(BuiltinProblem p) { return p == BuiltinProblem::Kubo ? "kubo" : "linosc"; }

inline Problem1 make_problem(BuiltinProblem p) {
  return p == BuiltinProblem::Kubo ? make_kubo() : make_linear_oscillator();
}

inline Problem1 make_problem(std::string_view id) { return make_problem(parse_problem_id(id)); }

/// Closed-form Euler-baseline limit of the Kubo oscillator:
/// U_P = -(1/√2) B_t sin(t+W_t), U_Q = (1/√2) B_t cos(t+W_t).
inline std::pair<double, double> kubo_euler_limit_closed_form(double t, double W_t, double B_t) {
  const double s = B_t / std::numbers::sqrt2;
  return {-s * std::sin(t + W_t), s * std::cos(t + W_t)};
}

/// Asymptotic Hamiltonian-deviation statistic. For Kubo this is the limit of
/// n·E[(ΔH)²]; for the linear oscillator the limit of n·E[ΔH].
inline double hamdev_limit_value(BuiltinProblem problem, MethodKind method, double theta, double t) {
  if (method == MethodKind::SymplTheta && !(theta >= 0.0 && theta <= 1.0))
    throw std::invalid_argument("theta must lie in [0, 1]");
  if (problem == BuiltinProblem::Kubo) {
    if (method == MethodKind::Euler) return 0.5 * t;
    // ∫₀ᵗ ½(1 + e^{-8s} cos 4s) ds
    const double damped = (8.0 + std::exp(-8.0 * t) * (4.0 * std::sin(4.0 * t) - 8.0 * std::cos(4.0 * t))) / 80.0;
    const double integral = 0.5 * t + 0.5 * damped;
    return 0.5 * (2.0 * theta - 1.0) * (2.0 * theta - 1.0) * integral;
  }
  if (method == MethodKind::Euler) return 0.25 * t * t;
  return 0.25 * (theta - 0.5) * (1.0 - std::cos(2.0 * t));
}

/// Central finite-difference derivatives for user problems that only supply
/// f, g, a, b. Jacobians use step `jac_step`; Hessians difference the
/// Jacobians with the coarser `hess_step`.
template <int D>
CoefficientSet<D> with_finite_difference_derivatives(typename CoefficientSet<D>::VecField f,
                                                     typename CoefficientSet<D>::VecField g,
                                                     typename CoefficientSet<D>::VecField a,
                                                     typename CoefficientSet<D>::VecField b, NoiseKind kind,
                                                     double jac_step = 1e-6, double hess_step = 1e-4) {
  using VecField = typename CoefficientSet<D>::VecField;
  CoefficientSet<D> c;
  c.f = f;
  c.g = g;
  c.a = a;
  c.b = b;
  c.noise_kind = kind;

  auto jac = [jac_step](VecField field, bool wrt_P) {
    return [field, wrt_P, jac_step](const Vec<D>& P, const Vec<D>& Q) {
      Mat<D> J;
      for (int j = 0; j < D; ++j) {
        Vec<D> Pp = P, Pm = P, Qp = Q, Qm = Q;
        (wrt_P ? Pp : Qp)(j) += jac_step;
        (wrt_P ? Pm : Qm)(j) -= jac_step;
        J.col(j) = (field(Pp, Qp) - field(Pm, Qm)) / (2.0 * jac_step);
      }
      return J;
    };
  };
  c.jac_f_P = jac(f, true);
  c.jac_f_Q = jac(f, false);
  c.jac_g_P = jac(g, true);
  c.jac_g_Q = jac(g, false);
  c.jac_a_P = jac(a, true);
  c.jac_a_Q = jac(a, false);
  c.jac_b_P = jac(b, true);
  c.jac_b_Q = jac(b, false);

  auto hess = [hess_step](VecField field) {
    return [field, hess_step](const Vec<D>& P, const Vec<D>& Q, int i) {
      auto grad = [&](const Vec<D>& Pe, const Vec<D>& Qe) {
        PhaseVec<D> gvec;
        for (int j = 0; j < 2 * D; ++j) {
          Vec<D> Pp = Pe, Pm = Pe, Qp = Qe, Qm = Qe;
          if (j < D) {
            Pp(j) += hess_step;
            Pm(j) -= hess_step;
          } else {
            Qp(j - D) += hess_step;
            Qm(j - D) -= hess_step;
          }
          gvec(j) = (field(Pp, Qp)(i) - field(Pm, Qm)(i)) / (2.0 * hess_step);
        }
        return gvec;
      };
      PhaseMat<D> H;
      for (int j = 0; j < 2 * D; ++j) {
        Vec<D> Pp = P, Pm = P, Qp = Q, Qm = Q;
        if (j < D) {
          Pp(j) += hess_step;
          Pm(j) -= hess_step;
        } else {
          Qp(j - D) += hess_step;
          Qm(j - D) -= hess_step;
        }
        H.col(j) = (grad(Pp, Qp) - grad(Pm, Qm)) / (2.0 * hess_step);
      }
      return PhaseMat<D>(0.5 * (H + H.transpose()));
    };
  };
  c.hess_f = hess(f);
  c.hess_g = hess(g);
  c.hess_a = hess(a);
  c.hess_b = hess(b);
  return c;
}

}  // namespace shs

#endif  // SHS_PROBLEM_MODEL_HPP
