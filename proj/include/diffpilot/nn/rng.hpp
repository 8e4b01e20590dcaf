#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "diffpilot/nn/tensor.hpp"

namespace diffpilot::nn {

namespace detail {
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based generator: draw i is mix64(key + (i + 1) * golden), with
/// key = mix64(seed). The stream depends only on (seed, counter), so it is
/// identical across platforms. Gaussians come from Box-Muller; the second
/// value of each pair is cached.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed), key_(detail::mix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; the bias is < n / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// n i.i.d. standard normal draws.
  Vec gauss(Eigen::Index n) {
    detail_require(n >= 1);
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  /// Independent generator for a named sub-stream.
  Rng derive(std::uint64_t stream) const noexcept {
    return Rng(detail::mix64(key_ ^ detail::mix64(stream + detail::kGolden)));
  }

 private:
  static void detail_require(bool ok) {
    if (!ok) throw ContractViolation("gauss: n must be >= 1");
  }

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace diffpilot::nn
