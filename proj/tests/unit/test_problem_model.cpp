#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <shs/noise_lattice.hpp>
#include <shs/problem_model.hpp>

#include "test_problems.hpp"

using namespace shs;
using shs::testing::make_additive_quartic;
using shs::testing::make_pendulum;
using shs::testing::make_quadratic_2d;

namespace {

State1 st(double P, double Q) { return {Vec<1>::Constant(P), Vec<1>::Constant(Q)}; }

// Composite Simpson rule, used as an independent oracle for closed forms.
template <class F>
double simpson(F fn, double lo, double hi, int panels = 4000) {
  const double h = (hi - lo) / panels;
  double s = fn(lo) + fn(hi);
  for (int i = 1; i < panels; ++i) s += fn(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Checks f = −∂H/∂Q, g = ∂H/∂P, a = −∂H̄/∂Q, b = ∂H̄/∂P at a point.
template <int D>
void expect_hamiltonian_compatible(const Problem<D>& p, const StateVector<D>& x, double tol) {
  const auto gH = p.hamiltonians.grad_H(x.P, x.Q);
  const auto gHb = p.hamiltonians.grad_H_bar(x.P, x.Q);
  EXPECT_LE((p.coeffs.f(x.P, x.Q) + gH.Q).norm(), tol);
  EXPECT_LE((p.coeffs.g(x.P, x.Q) - gH.P).norm(), tol);
  EXPECT_LE((p.coeffs.a(x.P, x.Q) + gHb.Q).norm(), tol);
  EXPECT_LE((p.coeffs.b(x.P, x.Q) - gHb.P).norm(), tol);
}

// Central-difference gradient of a scalar over phase space.
template <int D, class F>
PhaseVec<D> fd_gradient(F fn, const StateVector<D>& x, double step = 1e-6) {
  PhaseVec<D> out;
  const PhaseVec<D> base = x.stacked();
  for (int j = 0; j < 2 * D; ++j) {
    PhaseVec<D> up = base, dn = base;
    up(j) += step;
    dn(j) -= step;
    const auto u = StateVector<D>::from_stacked(up);
    const auto d = StateVector<D>::from_stacked(dn);
    out(j) = (fn(u.P, u.Q) - fn(d.P, d.Q)) / (2 * step);
  }
  return out;
}

template <int D>
StateVector<D> random_state(std::mt19937_64& gen, double spread = 1.5) {
  std::uniform_real_distribution<double> u(-spread, spread);
  StateVector<D> x;
  for (int i = 0; i < D; ++i) {
    x.P(i) = u(gen);
    x.Q(i) = u(gen);
  }
  return x;
}

}  // namespace

TEST(Kubo, ItoDriftAtInitialState) {
  const auto p = make_kubo();
  const auto d = ito_drift(p.coeffs, st(0, 1));
  EXPECT_DOUBLE_EQ(d.P(0), -1.0);
  EXPECT_DOUBLE_EQ(d.Q(0), -0.5);
  const auto z = ito_drift(p.coeffs, st(0, 0));
  EXPECT_EQ(z.P(0), 0.0);
  EXPECT_EQ(z.Q(0), 0.0);
}

TEST(Kubo, ExactSolutionValues) {
  const auto p = make_kubo();
  const auto x0 = p.exact.pointwise(0.0, 0.0);
  EXPECT_EQ(x0, p.initial);
  const auto x1 = p.exact.pointwise(std::numbers::pi / 2, 0.0);
  EXPECT_NEAR(x1.P(0), -1.0, 1e-15);
  EXPECT_NEAR(x1.Q(0), 0.0, 1e-15);
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 200; ++i) {
    const double t = 10.0 * std::generate_canonical<double, 53>(gen);
    const auto x = p.exact.pointwise(t, std::sqrt(t) * nd(gen));
    EXPECT_NEAR(p.hamiltonians.H(x.P, x.Q), 0.5, 1e-14);
  }
}

TEST(LinOsc, AdditiveItoDriftEqualsDrift) {
  const auto p = make_linear_oscillator();
  std::mt19937_64 gen(3);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_state<1>(gen);
    const auto d = ito_drift(p.coeffs, x);
    EXPECT_EQ(d.P(0), -x.Q(0));
    EXPECT_EQ(d.Q(0), x.P(0));
  }
}

TEST(LinOsc, RecursionWithoutNoiseIsRotation) {
  const auto p = make_linear_oscillator();
  const std::vector<double> zeros(37, 0.0);
  const double h = 0.03;
  const auto x = p.exact.advance(st(0.4, -1.1), h, zeros);
  const double angle = 37 * h;
  EXPECT_NEAR(x.P(0), std::cos(angle) * 0.4 + std::sin(angle) * 1.1, 1e-13);
  EXPECT_NEAR(x.Q(0), std::sin(angle) * 0.4 - std::cos(angle) * 1.1, 1e-13);
  const std::vector<double> one{0.7};
  const auto kick = p.exact.advance(st(0, 0), 0.0, one);
  EXPECT_EQ(kick.P(0), 0.7);
  EXPECT_EQ(kick.Q(0), 0.0);
}

TEST(LinOsc, RecursionVarianceMatchesConvolution) {
  // Var P_T = ∫₀ᵀ cos²(s) ds for the exact additive solution.
  const auto p = make_linear_oscillator();
  const int n = 200, T = 4, paths = 40000;
  double sum = 0, sum_sq = 0;
  for (int k = 0; k < paths; ++k) {
    const auto lat = sample_lattice(n, 1, T, 99, k);
    const double P = p.exact.advance(p.initial, 1.0 / n, lat.dW_fine).P(0);
    sum += P;
    sum_sq += P * P;
  }
  const double mean = sum / paths;
  const double var = sum_sq / paths - mean * mean;
  const double expected = simpson([](double s) { return std::cos(s) * std::cos(s); }, 0, T);
  EXPECT_NEAR(var, expected, 4 * expected * std::sqrt(2.0 / paths) + 0.01);
  EXPECT_NEAR(mean, 0.0, 4 * std::sqrt(expected / paths));
}

TEST(ClosedForms, KuboEulerLimit) {
  auto [P0, Q0] = kubo_euler_limit_closed_form(3.0, 0.4, 0.0);
  EXPECT_EQ(P0, 0.0);
  EXPECT_EQ(Q0, 0.0);
  auto [P, Q] = kubo_euler_limit_closed_form(0.0, 0.0, std::sqrt(2.0));
  EXPECT_NEAR(P, 0.0, 1e-15);
  EXPECT_NEAR(Q, 1.0, 1e-15);
  auto [P2, Q2] = kubo_euler_limit_closed_form(1.0, 0.3, -0.8);
  EXPECT_NEAR(P2 * P2 + Q2 * Q2, 0.32, 1e-15);
}

TEST(ClosedForms, HamdevLimitsAgainstQuadrature) {
  using BP = BuiltinProblem;
  using MK = MethodKind;
  EXPECT_DOUBLE_EQ(hamdev_limit_value(BP::Kubo, MK::Euler, 0, 4.0), 2.0);
  EXPECT_DOUBLE_EQ(hamdev_limit_value(BP::LinOsc, MK::Euler, 0, 3.0), 2.25);
  EXPECT_NEAR(hamdev_limit_value(BP::LinOsc, MK::SymplTheta, 0.5, 2.3), 0.0, 1e-16);
  EXPECT_NEAR(hamdev_limit_value(BP::Kubo, MK::SymplTheta, 0.5, 5.0), 0.0, 1e-16);
  for (double theta : {0.0, 0.1, 0.3, 0.75, 1.0}) {
    for (double t : {0.25, 1.0, 2.5, 7.0}) {
      const double integral =
          simpson([](double s) { return 0.5 * (1 + std::exp(-8 * s) * std::cos(4 * s)); }, 0, t);
      const double kubo = 0.5 * (2 * theta - 1) * (2 * theta - 1) * integral;
      EXPECT_NEAR(hamdev_limit_value(BP::Kubo, MK::SymplTheta, theta, t), kubo, 1e-10) << theta << ' ' << t;
      const double lin = (theta - 0.5) * simpson([](double s) { return 0.5 * std::sin(2 * s); }, 0, t);
      EXPECT_NEAR(hamdev_limit_value(BP::LinOsc, MK::SymplTheta, theta, t), lin, 1e-10);
    }
  }
  EXPECT_THROW(hamdev_limit_value(BP::Kubo, MK::SymplTheta, 1.5, 1.0), std::invalid_argument);
  EXPECT_THROW(hamdev_limit_value(BP::LinOsc, MK::SymplTheta, -0.1, 1.0), std::invalid_argument);
}

TEST(ClosedForms, KuboEulerLimitSecondMoment) {
  // E[U_P(t)²] = E[B_t²]/2 · E[sin²(t+W_t)] = (t/4)(1 − e^{−2t} cos 2t).
  const double t = 2.0;
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  const int draws = 200000;
  double acc = 0, acc2 = 0;
  for (int i = 0; i < draws; ++i) {
    const auto [P, Q] = kubo_euler_limit_closed_form(t, std::sqrt(t) * nd(gen), std::sqrt(t) * nd(gen));
    acc += P * P;
    acc2 += P * P * P * P;
  }
  const double mean = acc / draws;
  const double sd = std::sqrt(acc2 / draws - mean * mean);
  EXPECT_NEAR(mean, 0.25 * t * (1 - std::exp(-2 * t) * std::cos(2 * t)), 4 * sd / std::sqrt(draws));
}

TEST(Registry, ParseAndBuild) {
  EXPECT_EQ(parse_problem_id("kubo"), BuiltinProblem::Kubo);
  EXPECT_EQ(parse_problem_id("linosc"), BuiltinProblem::LinOsc);
  EXPECT_THROW(parse_problem_id("Kubo"), std::invalid_argument);
  EXPECT_EQ(make_problem("linosc").id, "linosc");
  EXPECT_EQ(problem_id(BuiltinProblem::Kubo), "kubo");
  EXPECT_EQ(make_problem(BuiltinProblem::Kubo).coeffs.noise_kind, NoiseKind::Multiplicative);
  EXPECT_EQ(make_problem(BuiltinProblem::LinOsc).coeffs.noise_kind, NoiseKind::Additive);
}

// Property: every shipped problem is Hamiltonian and its declared gradients,
// Jacobians and Hessians agree with finite differences at random states.
TEST(Property, HamiltonianCompatibilityAndGradients) {
  std::mt19937_64 gen(2024);
  const std::vector<Problem1> problems{make_kubo(), make_linear_oscillator(), make_pendulum(), make_additive_quartic()};
  for (const auto& p : problems) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto x = random_state<1>(gen);
      expect_hamiltonian_compatible(p, x, 1e-14);
      const auto gH = p.hamiltonians.grad_H(x.P, x.Q);
      EXPECT_LE((fd_gradient<1>(p.hamiltonians.H, x) - gH.stacked()).norm(), 1e-7) << p.id;
      const auto gHb = p.hamiltonians.grad_H_bar(x.P, x.Q);
      EXPECT_LE((fd_gradient<1>(p.hamiltonians.H_bar, x) - gHb.stacked()).norm(), 1e-7) << p.id;
      // Jacobians of the drift and diffusion against FD of the fields.
      const auto fd = with_finite_difference_derivatives<1>(p.coeffs.f, p.coeffs.g, p.coeffs.a, p.coeffs.b,
                                                            p.coeffs.noise_kind);
      EXPECT_LE((drift_jacobian(fd, x) - drift_jacobian(p.coeffs, x)).norm(), 1e-7) << p.id;
      EXPECT_LE((diffusion_jacobian(fd, x) - diffusion_jacobian(p.coeffs, x)).norm(), 1e-7) << p.id;
      for (int i = 0; i < 2; ++i) {
        EXPECT_LE((drift_hessian(fd, x, i) - drift_hessian(p.coeffs, x, i)).norm(), 1e-5) << p.id;
        EXPECT_LE((diffusion_hessian(fd, x, i) - diffusion_hessian(p.coeffs, x, i)).norm(), 1e-5) << p.id;
      }
      // Hessian of H: rows of J_fg relate as D²H = [[g_P, g_Q], [−f_P, −f_Q]].
      PhaseMat<1> from_drift;
      from_drift << p.coeffs.jac_g_P(x.P, x.Q), p.coeffs.jac_g_Q(x.P, x.Q), -p.coeffs.jac_f_P(x.P, x.Q),
          -p.coeffs.jac_f_Q(x.P, x.Q);
      EXPECT_LE((from_drift - p.hamiltonians.hess_H(x.P, x.Q)).norm(), 1e-13) << p.id;
    }
  }
}

TEST(Property, TwoDimensionalQuadraticIsHamiltonian) {
  std::mt19937_64 gen(5);
  for (bool additive : {false, true}) {
    const auto p = make_quadratic_2d(additive);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = random_state<2>(gen);
      expect_hamiltonian_compatible(p, x, 1e-13);
      EXPECT_LE((fd_gradient<2>(p.hamiltonians.H, x) - p.hamiltonians.grad_H(x.P, x.Q).stacked()).norm(), 1e-7);
    }
  }
}

TEST(Property, ItoDriftJacobianMatchesFiniteDifference) {
  std::mt19937_64 gen(77);
  const auto p = make_pendulum();
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_state<1>(gen);
    const PhaseMat<1> J = ito_drift_jacobian(p.coeffs, x);
    PhaseMat<1> fd;
    const double step = 1e-6;
    for (int j = 0; j < 2; ++j) {
      PhaseVec<1> up = x.stacked(), dn = x.stacked();
      up(j) += step;
      dn(j) -= step;
      fd.col(j) = (ito_drift(p.coeffs, State1::from_stacked(up)).stacked() -
                   ito_drift(p.coeffs, State1::from_stacked(dn)).stacked()) /
                  (2 * step);
    }
    EXPECT_LE((J - fd).norm(), 1e-7);
  }
}

TEST(FiniteDifferenceBuilder, QuadraticFieldsAreExactToRounding) {
  const auto kubo = make_kubo();
  const auto fd = with_finite_difference_derivatives<1>(kubo.coeffs.f, kubo.coeffs.g, kubo.coeffs.a,
                                                        kubo.coeffs.b, NoiseKind::Multiplicative);
  EXPECT_TRUE(fd.has_hessians());
  const auto x = st(0.3, -0.6);
  EXPECT_LE((drift_jacobian(fd, x) - drift_jacobian(kubo.coeffs, x)).norm(), 1e-9);
  EXPECT_LE(drift_hessian(fd, x, 0).norm(), 1e-6);
}
