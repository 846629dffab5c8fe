// Library usage: Hamiltonian drift of the Euler baseline against the
// symplectic Euler scheme on the Kubo oscillator.

#include <iostream>

#include <fmt/format.h>

#include <shs/montecarlo.hpp>

int main() {
  const auto kubo = shs::make_kubo();
  const int n = 100;
  const shs::EnsembleConfig ensemble{20000, 42, 256, 0};
  const std::vector<shs::SchemeConfig> schemes{{shs::EulerMaruyama{}, n}, {shs::SymplTheta{1.0}, n}};
  const std::vector<double> times{1, 2, 4};

  const auto study = shs::hamdev_study(kubo, schemes, n, times, ensemble);
  std::cout << "method   t   n*E[dH^2]   limit\n";
  for (std::size_t s = 0; s < schemes.size(); ++s)
    for (std::size_t j = 0; j < times.size(); ++j) {
      const auto ci = shs::confidence_interval(study.at(s, j).squared);
      const auto method = s == 0 ? shs::MethodKind::Euler : shs::MethodKind::SymplTheta;
      std::cout << fmt::format("{:6} {:3} {:7.4f}±{:.4f} {:7.4f}\n", shs::method_label(schemes[s]), times[j], ci.mean,
                               ci.halfwidth, shs::hamdev_limit_value(shs::BuiltinProblem::Kubo, method, 1.0, times[j]));
    }
}
