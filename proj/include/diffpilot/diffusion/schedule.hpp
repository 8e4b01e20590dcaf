#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diffpilot/nn/tensor.hpp"

namespace diffpilot::diffusion {

using nn::Tensor2;
using nn::Vec;

/// Variance of the reverse-step noise: sigma_k^2 = beta_k, or the posterior
/// variance beta_tilde_k = (1 - abar_{k-1}) / (1 - abar_k) * beta_k.
enum class SigmaMode { beta, beta_tilde };

inline std::string_view to_string(SigmaMode m) { return m == SigmaMode::beta ? "beta" : "beta_tilde"; }

inline SigmaMode sigma_mode_from_string(std::string_view s) {
  if (s == "beta") return SigmaMode::beta;
  if (s == "beta_tilde") return SigmaMode::beta_tilde;
  throw ConfigError("unknown sigma mode: " + std::string(s));
}

/// DDPM noise schedule over K steps. Step indices are 1-based; alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule from_betas(std::vector<double> betas, SigmaMode mode) {
    if (betas.empty()) throw ConfigError("noise schedule needs K >= 1");
    NoiseSchedule s;
    s.mode_ = mode;
    s.beta_ = std::move(betas);
    const std::size_t K = s.beta_.size();
    s.alpha_.resize(K);
    s.alpha_bar_.assign(K + 1, 1.0);
    s.sigma_.resize(K);
    for (std::size_t i = 0; i < K; ++i) {
      const double b = s.beta_[i];
      if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta_k must lie in (0, 1)");
      s.alpha_[i] = 1.0 - b;
      s.alpha_bar_[i + 1] = s.alpha_bar_[i] * s.alpha_[i];
    }
    for (std::size_t k = 1; k <= K; ++k) {
      const double b = s.beta_[k - 1];
      const double var = mode == SigmaMode::beta
                             ? b
                             : (1.0 - s.alpha_bar_[k - 1]) / (1.0 - s.alpha_bar_[k]) * b;
      s.sigma_[k - 1] = std::sqrt(var);
    }
    return s;
  }

  int K() const { return static_cast<int>(beta_.size()); }
  SigmaMode sigma_mode() const { return mode_; }

  double beta(int k) const { return beta_.at(index(k)); }
  double alpha(int k) const { return alpha_.at(index(k)); }
  double sigma(int k) const { return sigma_.at(index(k)); }
  double alpha_bar(int k) const {
    if (k < 0 || k > K()) throw ContractViolation("alpha_bar: step " + std::to_string(k) + " out of [0, K]");
    return alpha_bar_[static_cast<std::size_t>(k)];
  }
  /// Posterior variance beta_tilde_k.
  double beta_tilde(int k) const {
    return (1.0 - alpha_bar(k - 1)) / (1.0 - alpha_bar(k)) * beta(k);
  }

  const std::vector<double>& betas() const { return beta_; }

 private:
  std::size_t index(int k) const {
    if (k < 1 || k > K()) throw ContractViolation("diffusion step " + std::to_string(k) + " out of [1, K]");
    return static_cast<std::size_t>(k - 1);
  }

  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
  SigmaMode mode_ = SigmaMode::beta;
};

/// beta linearly spaced from beta_start to beta_end, endpoints included.
inline NoiseSchedule make_linear_schedule(int K, double beta_start, double beta_end,
                                          SigmaMode mode = SigmaMode::beta) {
  if (K < 1) throw ConfigError("make_linear_schedule: K must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    const double t = K == 1 ? 0.0 : static_cast<double>(k - 1) / static_cast<double>(K - 1);
    betas[static_cast<std::size_t>(k - 1)] = beta_start + (beta_end - beta_start) * t;
  }
  return NoiseSchedule::from_betas(std::move(betas), mode);
}

/// The 1e-4..0.02 range of a 1000-step schedule rescaled to K steps, so the
/// total injected noise (and hence abar_K ~ 0) is preserved for small K.
inline std::pair<double, double> default_beta_range(int K) {
  if (K < 21) throw ConfigError("default_beta_range: K must be >= 21 (beta_end = 20/K < 1)");
  return {0.1 / K, 20.0 / K};
}

inline NoiseSchedule make_default_schedule(int K, SigmaMode mode = SigmaMode::beta) {
  const auto [lo, hi] = default_beta_range(K);
  return make_linear_schedule(K, lo, hi, mode);
}

/// x_k = sqrt(abar_k) x0 + sqrt(1 - abar_k) eps.
inline Vec forward_diffuse(const NoiseSchedule& s, const Vec& x0, int k, const Vec& eps) {
  if (x0.size() != eps.size()) throw ContractViolation("forward_diffuse: x0 and eps lengths differ");
  const double ab = s.alpha_bar(k);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

/// Row-wise forward diffusion of a batch to a common step k.
inline Tensor2 forward_diffuse(const NoiseSchedule& s, const Tensor2& x0, int k, const Tensor2& eps) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw ContractViolation("forward_diffuse: x0 and eps shapes differ");
  const double ab = s.alpha_bar(k);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

}  // namespace diffpilot::diffusion
