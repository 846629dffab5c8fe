#ifndef SHS_NOISE_LATTICE_HPP
#define SHS_NOISE_LATTICE_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace shs {

/// Increments of W (and optionally of an independent motion B) on the fine
/// grid of width 1/(n·m) over [0, T]. Coarse cell k covers fine steps
/// [k·m, (k+1)·m).
struct BrownianLattice {
  int T = 1;
  int n = 1;
  int m = 1;
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
  std::vector<double> dW_fine;
  std::vector<double> dB_fine;  ///< empty unless requested

  std::size_t coarse_steps() const { return static_cast<std::size_t>(n) * static_cast<std::size_t>(T); }
  std::size_t fine_steps() const { return coarse_steps() * static_cast<std::size_t>(m); }
  double coarse_step() const { return 1.0 / n; }
  double fine_step() const { return 1.0 / (static_cast<double>(n) * m); }
  bool has_B() const { return !dB_fine.empty(); }
};

namespace detail {
inline void check_grid(int n, int m, int T) {
  if (n < 1 || m < 1 || T < 1) throw std::invalid_argument("lattice needs n, m, T >= 1");
  constexpr double kMaxFine = 1e9;
  if (static_cast<double>(n) * m * T > kMaxFine) throw std::length_error("lattice too large");
}
}  // namespace detail

/// Deterministic in (seed, path_id). W and B come from streams with distinct tags.
inline BrownianLattice sample_lattice(int n, int m, int T, std::uint64_t seed, std::uint64_t path_id,
                                      bool with_B = false) {
  detail::check_grid(n, m, T);
  BrownianLattice lat{T, n, m, seed, path_id, {}, {}};
  const double scale = std::sqrt(lat.fine_step());
  lat.dW_fine.resize(lat.fine_steps());
  NormalStream w(seed, path_id, MotionTag::W);
  w.fill(lat.dW_fine.begin(), lat.dW_fine.end(), scale);
  if (with_B) {
    lat.dB_fine.resize(lat.fine_steps());
    NormalStream b(seed, path_id, MotionTag::B);
    b.fill(lat.dB_fine.begin(), lat.dB_fine.end(), scale);
  }
  return lat;
}

/// All increments zero; used for noise-free runs.
inline BrownianLattice zero_lattice(int n, int m, int T, bool with_B = false) {
  detail::check_grid(n, m, T);
  BrownianLattice lat{T, n, m, 0, 0, {}, {}};
  lat.dW_fine.assign(lat.fine_steps(), 0.0);
  if (with_B) lat.dB_fine.assign(lat.fine_steps(), 0.0);
  return lat;
}

/// An m = 1 lattice whose fine increments are the given coarse increments.
inline BrownianLattice lattice_from_coarse(std::span<const double> coarse, int n, int T) {
  detail::check_grid(n, 1, T);
  if (coarse.size() != static_cast<std::size_t>(n) * T)
    throw std::invalid_argument("coarse increment count must equal n*T");
  BrownianLattice lat{T, n, 1, 0, 0, {coarse.begin(), coarse.end()}, {}};
  return lat;
}

/// Sums of consecutive groups of `per_cell` fine increments.
inline std::vector<double> aggregate(std::span<const double> fine, std::size_t per_cell) {
  if (per_cell == 0 || fine.size() % per_cell != 0)
    throw std::invalid_argument("fine increment count is not a multiple of the cell size");
  std::vector<double> out(fine.size() / per_cell);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < per_cell; ++j) s += fine[k * per_cell + j];
    out[k] = s;
  }
  return out;
}

inline std::vector<double> coarse_increments(const BrownianLattice& lat) {
  return aggregate(lat.dW_fine, static_cast<std::size_t>(lat.m));
}

inline std::vector<double> coarse_increments_B(const BrownianLattice& lat) {
  if (!lat.has_B()) throw std::logic_error("lattice carries no B increments");
  return aggregate(lat.dB_fine, static_cast<std::size_t>(lat.m));
}

/// Reinterprets the same fine increments at coarse resolution n_new, which
/// must divide n·m. Used to drive an n-ladder with a single Brownian path.
inline BrownianLattice regrid(const BrownianLattice& lat, int n_new) {
  const long long fine_per_unit = static_cast<long long>(lat.n) * lat.m;
  if (n_new < 1 || fine_per_unit % n_new != 0)
    throw std::invalid_argument("regrid: n_new must divide n*m = " + std::to_string(fine_per_unit));
  BrownianLattice out = lat;
  out.n = n_new;
  out.m = static_cast<int>(fine_per_unit / n_new);
  return out;
}

/// W (or B) at every fine node, starting with 0.
inline std::vector<double> cumulative(std::span<const double> increments) {
  std::vector<double> out(increments.size() + 1, 0.0);
  for (std::size_t i = 0; i < increments.size(); ++i) out[i + 1] = out[i] + increments[i];
  return out;
}

class TruncationPolicy {
 public:
  explicit TruncationPolicy(double rho = 2.5, bool enabled = true) : rho_(rho), enabled_(enabled) {
    if (!(rho > 2.0)) throw std::invalid_argument("truncation rho must be > 2");
  }

  double rho() const { return rho_; }
  bool enabled() const { return enabled_; }

  /// A_n = sqrt(2 rho ln n)
  double level(int n) const {
    if (n <= 1) throw std::invalid_argument("truncation needs n > 1");
    return std::sqrt(2.0 * rho_ * std::log(static_cast<double>(n)));
  }

 private:
  double rho_;
  bool enabled_;
};

struct TruncationResult {
  std::vector<double> increments;
  std::size_t clamp_count = 0;
};

/// Clamps the standardized increments sqrt(n)·ΔW to ±A_n. A disabled policy
/// passes the increments through untouched.
inline TruncationResult truncate(std::span<const double> coarse, const TruncationPolicy& policy, int n) {
  const double A = policy.level(n);
  TruncationResult out{{coarse.begin(), coarse.end()}, 0};
  if (!policy.enabled()) return out;
  // Compare against A_n/sqrt(n) itself so clamped values stay fixed points.
  const double bound = A / std::sqrt(static_cast<double>(n));
  for (double& dw : out.increments) {
    if (dw > bound) {
      dw = bound;
      ++out.clamp_count;
    } else if (dw < -bound) {
      dw = -bound;
      ++out.clamp_count;
    }
  }
  return out;
}

class OmegaProbe {
 public:
  explicit OmegaProbe(double epsilon = 0.1) : epsilon_(epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw std::invalid_argument("omega probe epsilon must lie in (0, 1/2)");
  }
  double epsilon() const { return epsilon_; }
  /// n^{-(1/2 - epsilon)}
  double threshold(int n) const { return std::pow(static_cast<double>(n), -(0.5 - epsilon_)); }

 private:
  double epsilon_;
};

/// Largest range (max − min) of W over the fine nodes of any coarse cell,
/// both cell endpoints included.
inline double max_cell_oscillation(const BrownianLattice& lat) {
  double worst = 0.0;
  std::size_t idx = 0;
  for (std::size_t k = 0; k < lat.coarse_steps(); ++k) {
    double w = 0.0, lo = 0.0, hi = 0.0;
    for (int j = 0; j < lat.m; ++j) {
      w += lat.dW_fine[idx++];
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
    worst = std::max(worst, hi - lo);
  }
  return worst;
}

inline bool outside_omega(const BrownianLattice& lat, double threshold) {
  return max_cell_oscillation(lat) > threshold;
}

inline double omega_complement_frequency(std::span<const BrownianLattice> ensemble, double threshold) {
  if (ensemble.empty()) throw std::invalid_argument("omega probe needs a nonempty ensemble");
  std::size_t hits = 0;
  for (const auto& lat : ensemble) hits += outside_omega(lat, threshold) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ensemble.size());
}

/// Uses the probe threshold at the ensemble's coarse resolution.
inline double omega_complement_frequency(std::span<const BrownianLattice> ensemble, const OmegaProbe& probe) {
  if (ensemble.empty()) throw std::invalid_argument("omega probe needs a nonempty ensemble");
  return omega_complement_frequency(ensemble, probe.threshold(ensemble.front().n));
}

// Binary layout: T, n, m, seed, path_id as little-endian uint64, then the W
// increments as little-endian IEEE doubles, then the B increments if present.
namespace detail {
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}
inline std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw std::runtime_error("lattice file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return v;
}
}  // namespace detail

inline void dump_lattice(const BrownianLattice& lat, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::uint64_t v : {std::uint64_t(lat.T), std::uint64_t(lat.n), std::uint64_t(lat.m), lat.seed, lat.path_id})
    detail::put_u64(os, v);
  for (double x : lat.dW_fine) detail::put_u64(os, std::bit_cast<std::uint64_t>(x));
  for (double x : lat.dB_fine) detail::put_u64(os, std::bit_cast<std::uint64_t>(x));
  if (!os) throw std::runtime_error("write failed for " + path);
}

inline BrownianLattice load_lattice(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot open " + path);
  const auto bytes = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0);
  BrownianLattice lat;
  lat.T = static_cast<int>(detail::get_u64(is));
  lat.n = static_cast<int>(detail::get_u64(is));
  lat.m = static_cast<int>(detail::get_u64(is));
  lat.seed = detail::get_u64(is);
  lat.path_id = detail::get_u64(is);
  detail::check_grid(lat.n, lat.m, lat.T);
  const std::uint64_t count = lat.fine_steps();
  const std::uint64_t payload = bytes - 40;
  if (payload != 8 * count && payload != 16 * count) throw std::runtime_error("lattice file size does not match header");
  lat.dW_fine.resize(count);
  for (auto& x : lat.dW_fine) x = std::bit_cast<double>(detail::get_u64(is));
  if (payload == 16 * count) {
    lat.dB_fine.resize(count);
    for (auto& x : lat.dB_fine) x = std::bit_cast<double>(detail::get_u64(is));
  }
  return lat;
}

}  // namespace shs

#endif  // SHS_NOISE_LATTICE_HPP
