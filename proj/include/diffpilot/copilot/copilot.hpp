#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "diffpilot/diffusion/sample.hpp"

namespace diffpilot::copilot {

using diffusion::Denoiser;
using diffusion::NoiseSchedule;
using nn::Tensor2;
using nn::Vec;

/// Axis-aligned bounds on actions (world units).
struct ActionBox {
  Vec lo, hi;

  bool contains(const Vec& a) const { return (a.array() >= lo.array()).all() && (a.array() <= hi.array()).all(); }
  Vec clamp(const Vec& a) const { return a.cwiseMax(lo).cwiseMin(hi); }
  Tensor2 clamp(const Tensor2& a) const {
    Tensor2 out = a;
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      out.row(r) = a.row(r).cwiseMax(lo.transpose()).cwiseMin(hi.transpose());
    return out;
  }
};

/// k_sw = round-half-up(gamma * K).
inline int switch_step(double gamma, int K) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("forward diffusion ratio gamma must lie in [0, 1]");
  if (K < 1) throw ConfigError("K must be >= 1");
  return static_cast<int>(std::floor(gamma * K + 0.5));
}

struct CopilotConfig {
  double gamma = 0.0;
  int K = 0;

  static CopilotConfig make(double gamma, int K) {
    switch_step(gamma, K);
    return {gamma, K};
  }
  int k_sw() const { return switch_step(gamma, K); }
};

/// Partial diffusion in normalized space: forward-noise every row to k_sw in
/// closed form, then run the reverse chain k_sw..1 (no noise on the last step).
template <typename EpsFn, typename NoiseFn>
Tensor2 partial_diffuse(const NoiseSchedule& s, EpsFn&& eps_fn, const Tensor2& x_n, int k_sw, NoiseFn&& noise) {
  if (k_sw < 0 || k_sw > s.K()) throw ContractViolation("partial_diffuse: k_sw out of [0, K]");
  if (k_sw == 0) return x_n;
  Tensor2 x = diffusion::forward_diffuse(s, x_n, k_sw, noise(x_n.rows(), x_n.cols()));
  return diffusion::reverse_diffuse(s, std::forward<EpsFn>(eps_fn), std::move(x), k_sw, noise);
}

/// Shared actions for a batch of (goal-stripped observation, pilot action)
/// rows, each row drawing noise from its own generator. Returns world-unit
/// actions clamped to `box` when given. With k_sw = 0 the pilot actions are
/// returned unchanged.
inline Tensor2 copilot_act_batch(const Denoiser& d, const NoiseSchedule& s, const Tensor2& obs, const Tensor2& pilot,
                                 const CopilotConfig& cfg, std::span<nn::Rng> rngs,
                                 const std::optional<ActionBox>& box = std::nullopt) {
  d.check_schedule(s);
  if (cfg.K != s.K()) throw ConfigError("CopilotConfig K does not match the noise schedule");
  const int k_sw = cfg.k_sw();
  if (static_cast<std::size_t>(pilot.cols()) != d.action_dim)
    throw ContractViolation("copilot_act: pilot action dimension mismatch");
  if (static_cast<std::size_t>(obs.cols()) != d.obs_dim || obs.rows() != pilot.rows())
    throw ContractViolation("copilot_act: observation shape mismatch (expected " + std::to_string(d.obs_dim) +
                            " goal-stripped dims per row)");
  if (rngs.size() != static_cast<std::size_t>(pilot.rows()))
    throw ContractViolation("copilot_act: one generator per row required");
  if (box) {
    for (Eigen::Index r = 0; r < pilot.rows(); ++r)
      if (!box->contains(pilot.row(r).transpose())) throw ContractViolation("copilot_act: pilot action outside the action box");
  }
  if (k_sw == 0) return pilot;

  const Tensor2 obs_n = d.norm.normalize_obs(obs);
  const Tensor2 x_n = d.norm.normalize_act(pilot);
  const Tensor2 out_n =
      partial_diffuse(s, diffusion::bind_denoiser(d, obs_n), x_n, k_sw, diffusion::per_row_noise(rngs));
  const Tensor2 out = d.norm.denormalize_act(out_n);
  return box ? box->clamp(out) : out;
}

inline Vec copilot_act(const Denoiser& d, const NoiseSchedule& s, const Vec& obs, const Vec& pilot_action,
                       const CopilotConfig& cfg, nn::Rng& rng, const std::optional<ActionBox>& box = std::nullopt) {
  if (cfg.k_sw() == 0) {
    // Pass-through still validates its inputs.
    d.check_schedule(s);
    if (static_cast<std::size_t>(pilot_action.size()) != d.action_dim || static_cast<std::size_t>(obs.size()) != d.obs_dim)
      throw ContractViolation("copilot_act: dimension mismatch");
    if (box && !box->contains(pilot_action)) throw ContractViolation("copilot_act: pilot action outside the action box");
    return pilot_action;
  }
  Tensor2 o(1, obs.size());
  if (obs.size() > 0) o.row(0) = obs.transpose();
  Tensor2 a = pilot_action.transpose();
  return copilot_act_batch(d, s, o, a, cfg, std::span<nn::Rng>(&rng, 1), box).row(0).transpose();
}

}  // namespace diffpilot::copilot
