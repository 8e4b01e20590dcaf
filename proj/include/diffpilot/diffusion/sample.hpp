#pragma once

#include <span>

#include "diffpilot/diffusion/denoiser.hpp"
#include "diffpilot/nn/rng.hpp"

namespace diffpilot::diffusion {

/// Noise source drawing every entry of a batch from one generator, row-major.
inline auto shared_noise(nn::Rng& rng) {
  return [&rng](Eigen::Index rows, Eigen::Index cols) {
    Tensor2 z(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) z(r, c) = rng.normal();
    return z;
  };
}

/// Noise source where row r draws from its own generator rngs[r].
inline auto per_row_noise(std::span<nn::Rng> rngs) {
  return [rngs](Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<std::size_t>(rows) != rngs.size())
      throw ContractViolation("per_row_noise: one generator per row required");
    Tensor2 z(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) z(r, c) = rngs[static_cast<std::size_t>(r)].normal();
    return z;
  };
}

/// Ancestral reverse loop from step k_start down to 0:
///   x_{k-1} = mu(x_k, k) + sigma_k z, with z = 0 on the final (k = 1) step.
/// `eps_fn(x, k)` returns the predicted noise for the batch.
template <typename EpsFn, typename NoiseFn>
Tensor2 reverse_diffuse(const NoiseSchedule& s, EpsFn&& eps_fn, Tensor2 x, int k_start, NoiseFn&& noise) {
  if (k_start < 0 || k_start > s.K()) throw ContractViolation("reverse_diffuse: start step out of [0, K]");
  for (int k = k_start; k >= 1; --k) {
    const Tensor2 eps = eps_fn(static_cast<const Tensor2&>(x), k);
    x = mu_from_eps(s, x, k, eps);
    // z is drawn at every step and dropped at k = 1.
    const Tensor2 z = noise(x.rows(), x.cols());
    if (k > 1) x += s.sigma(k) * z;
  }
  return x;
}

/// Full sampling in normalized space: x_K ~ N(0, I), then K reverse steps.
template <typename EpsFn>
Tensor2 sample_normalized(const NoiseSchedule& s, EpsFn&& eps_fn, Eigen::Index n, Eigen::Index dim, nn::Rng& rng) {
  auto noise = shared_noise(rng);
  Tensor2 x = noise(n, dim);
  return reverse_diffuse(s, std::forward<EpsFn>(eps_fn), std::move(x), s.K(), noise);
}

/// eps function bound to a denoiser and a fixed batch of normalized observations.
inline auto bind_denoiser(const Denoiser& d, const Tensor2& obs_n) {
  return [&d, &obs_n](const Tensor2& x, int k) { return predict_eps(d, x, k, obs_n); };
}

/// n samples for one observation (world units in, world units out).
inline Tensor2 sample_batch(const Denoiser& d, const NoiseSchedule& s, const Vec& obs, Eigen::Index n, nn::Rng& rng) {
  d.check_schedule(s);
  if (static_cast<std::size_t>(obs.size()) != d.obs_dim) throw ContractViolation("sample: observation dimension mismatch");
  Tensor2 obs_n(1, static_cast<Eigen::Index>(d.obs_dim));
  if (d.obs_dim > 0) obs_n.row(0) = d.norm.normalize_obs(obs).transpose();
  const Tensor2 x = sample_normalized(s, bind_denoiser(d, obs_n), n, static_cast<Eigen::Index>(d.action_dim), rng);
  return d.norm.denormalize_act(x);
}

inline Vec sample(const Denoiser& d, const NoiseSchedule& s, const Vec& obs, nn::Rng& rng) {
  return sample_batch(d, s, obs, 1, rng).row(0).transpose();
}

}  // namespace diffpilot::diffusion
