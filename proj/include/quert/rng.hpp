#pragma once

// Deterministic, platform-independent random stream. std::mt19937 engines are
// portable but the standard distributions are not, so draws are implemented
// directly on top of splitmix64.

#include <cmath>
#include <cstdint>
#include <vector>

namespace quert {

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  // Rebuilds the stream at an absolute draw position (used by resume).
  void seek(std::uint64_t position) {
    state_ = seed_;
    position_ = 0;
    while (position_ < position) next_u64();
  }

  std::uint64_t next_u64() {
    ++position_;
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    // Box-Muller, one value per call.
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream, stable under changes to the parent's draw order.
  RngStream derive(std::uint64_t stream_id) const {
    RngStream mix(seed_ ^ (0x6a09e667f3bcc909ULL + stream_id * 0x3c6ef372fe94f82bULL));
    mix.next_u64();
    return RngStream(mix.next_u64());
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  std::uint64_t position_ = 0;
};

}  // namespace quert
