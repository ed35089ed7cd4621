#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>

#include "mcoco/error.hpp"

namespace mcoco {

/// Seedable random source used everywhere in the library.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so the
/// conversions below (53-bit uniform doubles, rejection-sampled indices,
/// Box-Muller normals, Fisher-Yates shuffles) are written out here to keep
/// streams identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    detail::require(n > 0, "Rng::index: n must be positive");
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (cached_normal_) {
      const double z = *cached_normal_;
      cached_normal_.reset();
      return z;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  /// Text snapshot of the full generator state (engine plus cached normal).
  std::string state() const {
    std::ostringstream out;
    out << engine_ << ' ' << (cached_normal_ ? 1 : 0) << ' ';
    if (cached_normal_) {
      out << std::hexfloat << *cached_normal_;
    }
    return out.str();
  }

  void restore(const std::string& snapshot) {
    std::istringstream in(snapshot);
    std::mt19937_64 engine;
    int has_cached = 0;
    in >> engine >> has_cached;
    if (!in) throw FormatError("Rng::restore: malformed generator state");
    std::optional<double> cached;
    if (has_cached == 1) {
      std::string token;
      in >> token;
      if (!in) throw FormatError("Rng::restore: missing cached normal");
      cached = std::strtod(token.c_str(), nullptr);
    }
    engine_ = engine;
    cached_normal_ = cached;
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> cached_normal_;
};

}  // namespace mcoco
