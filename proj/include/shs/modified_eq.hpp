#ifndef SHS_MODIFIED_EQ_HPP
#define SHS_MODIFIED_EQ_HPP

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "integrators.hpp"
#include "noise_lattice.hpp"
#include "problem_model.hpp"

namespace shs {

/// Fine-grid solution of a truncated modified equation of the symplectic
/// Euler scheme at coarse resolution n.
template <int D>
struct ModifiedPath {
  int n = 0;
  int m = 0;
  std::vector<double> times;
  std::vector<StateVector<D>> states;
  std::vector<std::size_t> cell_index;  ///< coarse cell containing each node; node k·m opens cell k
  std::vector<double> bridge;           ///< W_s − W_{η_n(s)} at each node

  /// States at the coarse nodes k·m.
  std::vector<StateVector<D>> coarse_states() const {
    std::vector<StateVector<D>> out;
    for (std::size_t i = 0; i < states.size(); i += static_cast<std::size_t>(m)) out.push_back(states[i]);
    return out;
  }
};

/// Fine substeps per coarse cell for modified-equation runs. Fixed m leaves
/// the O(√h_fine) Euler–Maruyama error of the fine solve on top of the
/// ME-to-scheme gap, which then stops shrinking with n.
inline int modified_refinement(int n) { return std::max(16, n / 2); }

namespace detail {
template <int D>
ModifiedPath<D> modified_path_shell(const BrownianLattice& lat, const StateVector<D>& initial) {
  const std::size_t N = lat.fine_steps();
  ModifiedPath<D> out;
  out.n = lat.n;
  out.m = lat.m;
  out.times.resize(N + 1);
  out.states.resize(N + 1);
  out.cell_index.resize(N + 1);
  out.bridge.assign(N + 1, 0.0);
  out.states[0] = initial;
  const auto m = static_cast<std::size_t>(lat.m);
  for (std::size_t i = 0; i <= N; ++i) {
    out.times[i] = static_cast<double>(i) * lat.fine_step();
    out.cell_index[i] = i / m;
  }
  return out;
}
}  // namespace detail

/// dX = ItôDrift(X) ds + σ(X) dW + κ(X)(W_s − W_{η_n(s)}) dW with
/// κ = (a_P a − a_Q b, b_P a − b_Q b); Euler–Maruyama on the fine grid.
template <int D>
  requires(D == 1)
ModifiedPath<D> integrate_modified_mult(const CoefficientSet<D>& c, const StateVector<D>& initial, int n,
                                        const BrownianLattice& lat) {
  if (c.noise_kind != NoiseKind::Multiplicative) throw std::invalid_argument("multiplicative modified equation needs multiplicative noise");
  if (lat.n != n) throw std::invalid_argument(fmt::format("lattice resolution {} does not match n = {}", lat.n, n));
  auto out = detail::modified_path_shell(lat, initial);
  const double hf = lat.fine_step();
  const auto m = static_cast<std::size_t>(lat.m);
  double Y = 0.0;
  for (std::size_t i = 0; i < lat.fine_steps(); ++i) {
    const auto& x = out.states[i];
    const auto mu = ito_drift(c, x);
    const double a = c.a(x.P, x.Q)(0), b = c.b(x.P, x.Q)(0);
    const double kP = c.jac_a_P(x.P, x.Q)(0) * a - c.jac_a_Q(x.P, x.Q)(0) * b;
    const double kQ = c.jac_b_P(x.P, x.Q)(0) * a - c.jac_b_Q(x.P, x.Q)(0) * b;
    const double dw = lat.dW_fine[i];
    auto& next = out.states[i + 1];
    next.P(0) = x.P(0) + mu.P(0) * hf + (a + kP * Y) * dw;
    next.Q(0) = x.Q(0) + mu.Q(0) * hf + (b + kQ * Y) * dw;
    Y = (i + 1) % m == 0 ? 0.0 : Y + dw;
    out.bridge[i + 1] = Y;
  }
  return out;
}

/// Additive-noise modified equation with τ = s − η_n(s) and Y = W_s − W_{η_n(s)}:
/// dP = [f + τ(f_P f − f_Q g + ½a²f_PP + ½b²f_QQ) − b f_Q Y] ds + (a + τ a f_P) dW,
/// and the same with g in the Q row.
template <int D>
  requires(D == 1)
ModifiedPath<D> integrate_modified_add(const CoefficientSet<D>& c, const StateVector<D>& initial, int n,
                                       const BrownianLattice& lat) {
  if (c.noise_kind != NoiseKind::Additive) throw std::invalid_argument("additive modified equation needs additive noise");
  if (!c.has_hessians()) throw std::invalid_argument("additive modified equation needs Hessians of f and g");
  if (lat.n != n) throw std::invalid_argument(fmt::format("lattice resolution {} does not match n = {}", lat.n, n));
  auto out = detail::modified_path_shell(lat, initial);
  const double hf = lat.fine_step();
  const auto m = static_cast<std::size_t>(lat.m);
  double Y = 0.0;
  for (std::size_t i = 0; i < lat.fine_steps(); ++i) {
    const auto& x = out.states[i];
    const double tau = static_cast<double>(i % m) * hf;
    const double f = c.f(x.P, x.Q)(0), g = c.g(x.P, x.Q)(0);
    const double a = c.a(x.P, x.Q)(0), b = c.b(x.P, x.Q)(0);
    const double fP = c.jac_f_P(x.P, x.Q)(0), fQ = c.jac_f_Q(x.P, x.Q)(0);
    const double gP = c.jac_g_P(x.P, x.Q)(0), gQ = c.jac_g_Q(x.P, x.Q)(0);
    const auto Hf = c.hess_f(x.P, x.Q, 0);
    const auto Hg = c.hess_g(x.P, x.Q, 0);
    const double corrP = fP * f - fQ * g + 0.5 * a * a * Hf(0, 0) + 0.5 * b * b * Hf(1, 1);
    const double corrQ = gP * f - gQ * g + 0.5 * a * a * Hg(0, 0) + 0.5 * b * b * Hg(1, 1);
    const double dw = lat.dW_fine[i];
    auto& next = out.states[i + 1];
    next.P(0) = x.P(0) + (f + tau * corrP - b * fQ * Y) * hf + (a + tau * a * fP) * dw;
    next.Q(0) = x.Q(0) + (g + tau * corrQ - b * gQ * Y) * hf + (b + tau * a * gP) * dw;
    Y = (i + 1) % m == 0 ? 0.0 : Y + dw;
    out.bridge[i + 1] = Y;
  }
  return out;
}

/// Dispatches on the noise kind.
template <int D>
  requires(D == 1)
ModifiedPath<D> integrate_modified(const Problem<D>& problem, int n, const BrownianLattice& lat) {
  return problem.coeffs.noise_kind == NoiseKind::Multiplicative
             ? integrate_modified_mult(problem.coeffs, problem.initial, n, lat)
             : integrate_modified_add(problem.coeffs, problem.initial, n, lat);
}

/// Max over coarse nodes of |X̃ − scheme|.
template <int D>
double sup_node_gap(const ModifiedPath<D>& me, const Trajectory<D>& scheme) {
  const auto coarse = me.coarse_states();
  if (coarse.size() != scheme.states.size()) throw std::invalid_argument("modified path and trajectory grids differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < coarse.size(); ++k)
    worst = std::max(worst, (coarse[k].stacked() - scheme.states[k].stacked()).norm());
  return worst;
}

template <int D>
void write_modified_csv(std::ostream& os, const ModifiedPath<D>& path) {
  os << "t" << detail::state_header<D>() << ",cell_index\n";
  for (std::size_t i = 0; i < path.states.size(); ++i)
    os << fmt::format("{:.17g}", path.times[i]) << detail::state_fields(path.states[i]) << ',' << path.cell_index[i]
       << '\n';
}

}  // namespace shs

#endif  // SHS_MODIFIED_EQ_HPP
