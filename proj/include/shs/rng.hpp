#ifndef SHS_RNG_HPP
#define SHS_RNG_HPP

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace shs {

/// Independent motions sharing one (seed, path_id) key.
enum class MotionTag : std::uint32_t { W = 1, B = 2, Aux = 3 };

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/// Deterministic stream keyed by (seed, path_id, tag). The 256-bit
/// xoshiro256++ state is the Philox image of the key, so a stream depends only
/// on its key and never on evaluation order or worker assignment.
/// Satisfies UniformRandomBitGenerator with 64-bit output.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  KeyedStream(std::uint64_t seed, std::uint64_t path_id, MotionTag tag) {
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                           static_cast<std::uint32_t>(seed >> 32)};
    const auto tag_bits = static_cast<std::uint32_t>(tag) << 24;
    for (std::uint32_t block = 0; block < 2; ++block) {
      const auto out = philox4x32({block, tag_bits, static_cast<std::uint32_t>(path_id),
                                   static_cast<std::uint32_t>(path_id >> 32)},
                                  key);
      state_[2 * block] = (std::uint64_t{out[1]} << 32) | out[0];
      state_[2 * block + 1] = (std::uint64_t{out[3]} << 32) | out[2];
    }
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 0x9E3779B97F4A7C15ull;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

/// Standard normal draws from a KeyedStream (Boost ziggurat sampler).
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t path_id, MotionTag tag)
      : bits_(seed, path_id, tag) {}

  double operator()() { return dist_(bits_); }

  template <class OutIt>
  void fill(OutIt first, OutIt last, double scale) {
    for (; first != last; ++first) *first = scale * dist_(bits_);
  }

 private:
  KeyedStream bits_;
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace shs

#endif  // SHS_RNG_HPP
