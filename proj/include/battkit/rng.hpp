#pragma once

#include <cmath>
#include <cstdint>

namespace battkit::rng {

// Counter-style splitmix64 generator. Every consumer derives its own stream
// from (seed, stream_id), so adding a consumer never shifts the draws seen
// by the others and whole runs replay bit-identically from one seed.
class Stream {
 public:
  static Stream derive(std::uint64_t seed, std::uint64_t stream_id) {
    Stream s;
    s.state_ = mix(seed ^ mix(stream_id + 0x9E3779B97F4A7C15ull));
    return s;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // uniform in (0, 1]
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // standard normal via Box-Muller; second value of each pair is cached
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace battkit::rng
