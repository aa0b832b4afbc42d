// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace fcltlab {

/// One round of the SplitMix64 mixer. Used to derive well-separated engine
/// seeds from (seed, stream) pairs.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// A reproducible random stream keyed by (seed, stream_id).
///
/// The engine is std::mt19937_64 (bit-exact across platforms); all variate
/// transforms are done here from raw 64-bit words, never through
/// std::*_distribution, whose output is implementation-defined. Distinct
/// stream ids on the same seed give independent, individually reproducible
/// streams, which is what the replicate workers rely on.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= 0x6a09e667f3bcc909ULL + stream_id + (s << 6) + (s >> 2);
    std::uint64_t b = splitmix64(s);
    engine_.seed(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0,1); never returns an endpoint.
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Exponential holding time with the given rate; strictly positive.
  double exponential(double rate) { return -std::log(uniform01()) / rate; }

  /// Standard normal via Box-Muller (both variates kept).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = uniform01();
    double v = uniform01();
    double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * M_PI * v);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * v);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Index drawn from the probability row `probs` (assumed to sum to one).
  /// Rounding fallthrough lands on the last index with positive mass, never
  /// on a zero-probability entry.
  int discrete(std::span<const double> probs) {
    double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = static_cast<int>(i);
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return last_positive;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

} // namespace fcltlab
