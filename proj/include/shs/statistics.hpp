#ifndef SHS_STATISTICS_HPP
#define SHS_STATISTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace shs {

/// Running count, mean and sum of squared deviations (Welford), mergeable
/// with the pairwise update of Chan et al.
struct StreamingMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const StreamingMoments& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n1 = static_cast<double>(count), n2 = static_cast<double>(o.count);
    const double n = n1 + n2;
    const double delta = o.mean - mean;
    mean += delta * n2 / n;
    m2 += o.m2 + delta * delta * n1 * n2 / n;
    count += o.count;
  }

  /// Unbiased sample variance; 0 with fewer than two samples.
  double variance() const { return count < 2 ? 0.0 : m2 / static_cast<double>(count - 1); }
  /// E[x²] estimated as mean² + population variance.
  double raw_second_moment() const { return count == 0 ? 0.0 : mean * mean + m2 / static_cast<double>(count); }
};

struct ConfidenceInterval {
  double mean = 0.0;
  double halfwidth = 0.0;
};

/// Normal-approximation 95% interval: 1.96·sqrt(variance / count).
inline ConfidenceInterval confidence_interval(const StreamingMoments& m) {
  if (m.count < 2) throw std::invalid_argument("confidence interval needs at least two samples");
  return {m.mean, 1.96 * std::sqrt(m.variance() / static_cast<double>(m.count))};
}

struct KSResult {
  double D = 0.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

/// sup_x |F_xs(x) − F_ys(x)| by a merge scan over the sorted samples; ties
/// are consumed on both sides before the gap is taken.
inline KSResult two_sample_ks(std::span<const double> xs, std::span<const double> ys) {
  if (xs.empty() || ys.empty()) throw std::invalid_argument("KS test needs nonempty samples");
  std::vector<double> a(xs.begin(), xs.end()), b(ys.begin(), ys.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double D = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    D = std::max(D, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {D, a.size(), b.size()};
}

inline KSResult two_sample_ks(const std::vector<double>& xs, const std::vector<double>& ys) {
  return two_sample_ks(std::span<const double>(xs), std::span<const double>(ys));
}

/// Asymptotic two-sample critical value c(α)·sqrt((n1+n2)/(n1·n2)) with
/// c(α) = sqrt(−½ ln(α/2)).
inline double ks_critical_value(double alpha, std::size_t n1, std::size_t n2) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("sample sizes must be positive");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double a = static_cast<double>(n1), b = static_cast<double>(n2);
  return c * std::sqrt((a + b) / (a * b));
}

/// Least-squares slope of log(error) against log(1/n).
inline double empirical_order(std::span<const std::pair<double, double>> pairs) {
  std::vector<double> xs, ys;
  for (const auto& [n, err] : pairs) {
    if (!(n > 0.0) || !(err > 0.0) || !std::isfinite(err))
      throw std::invalid_argument("empirical order needs positive n and positive finite errors");
    xs.push_back(-std::log(n));
    ys.push_back(std::log(err));
  }
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 3)
    throw std::invalid_argument("empirical order needs at least three distinct n");
  const double k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / k;
    my += ys[i] / k;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

inline double empirical_order(const std::vector<std::pair<double, double>>& pairs) {
  return empirical_order(std::span<const std::pair<double, double>>(pairs));
}

}  // namespace shs

#endif  // SHS_STATISTICS_HPP
