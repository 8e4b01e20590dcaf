#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "diffpilot/diffusion/schedule.hpp"
#include "diffpilot/nn/mlp.hpp"

namespace diffpilot::diffusion {

/// Per-dimension z-score statistics. Diffusion runs on normalized data; the
/// public API speaks world units.
struct NormStats {
  Vec obs_mean, obs_std;
  Vec act_mean, act_std;

  void validate() const {
    if (obs_mean.size() != obs_std.size() || act_mean.size() != act_std.size())
      throw IntegrityError("NormStats: mean/std lengths differ");
    if (act_mean.size() < 1) throw IntegrityError("NormStats: action dimension must be >= 1");
    if (!obs_mean.allFinite() || !obs_std.allFinite() || !act_mean.allFinite() || !act_std.allFinite())
      throw IntegrityError("NormStats: non-finite entry");
    if ((obs_std.array() <= 0.0).any() || (act_std.array() <= 0.0).any())
      throw IntegrityError("NormStats: std entries must be > 0");
  }

  Eigen::Index obs_dim() const { return obs_mean.size(); }
  Eigen::Index action_dim() const { return act_mean.size(); }

  Tensor2 normalize_obs(const Tensor2& obs) const {
    return (obs.rowwise() - obs_mean.transpose()).array().rowwise() / obs_std.transpose().array();
  }
  Tensor2 normalize_act(const Tensor2& act) const {
    return (act.rowwise() - act_mean.transpose()).array().rowwise() / act_std.transpose().array();
  }
  Tensor2 denormalize_act(const Tensor2& x) const {
    return (x.array().rowwise() * act_std.transpose().array()).rowwise() + act_mean.transpose().array();
  }
  Vec normalize_obs(const Vec& o) const { return (o - obs_mean).cwiseQuotient(obs_std); }
  Vec normalize_act(const Vec& a) const { return (a - act_mean).cwiseQuotient(act_std); }
  Vec denormalize_act(const Vec& x) const { return x.cwiseProduct(act_std) + act_mean; }

  /// Population statistics of the given rows.
  static NormStats compute(const Tensor2& obs, const Tensor2& act) {
    if (act.rows() == 0 || obs.rows() != act.rows())
      throw ContractViolation("NormStats::compute: need matching nonempty obs/act rows");
    NormStats n;
    auto stats = [](const Tensor2& x, Vec& mean, Vec& sd) {
      mean = x.colwise().mean().transpose();
      sd = ((x.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
    };
    stats(obs, n.obs_mean, n.obs_std);
    stats(act, n.act_mean, n.act_std);
    return n;
  }
};

/// Sinusoidal features of k/K: sin and cos of pi * 2^j * k / K for j < dim/2.
inline void timestep_embedding(int k, int K, std::span<double> out) {
  const std::size_t half = out.size() / 2;
  const double t = static_cast<double>(k) / static_cast<double>(K);
  for (std::size_t j = 0; j < half; ++j) {
    const double f = std::numbers::pi * std::ldexp(1.0, static_cast<int>(j)) * t;
    out[j] = std::sin(f);
    out[half + j] = std::cos(f);
  }
}

/// State-conditioned noise predictor eps_theta(x_k, k | obs).
/// Network input layout: [normalized obs | noisy normalized action | embedding(k)].
struct Denoiser {
  nn::MlpSpec spec;
  nn::ParamStore params;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  int K = 0;
  std::size_t timestep_embed_dim = 16;
  NormStats norm;

  void validate() const {
    if (spec.input_dim != obs_dim + action_dim + timestep_embed_dim)
      throw ContractViolation("Denoiser: input_dim != obs_dim + action_dim + timestep_embed_dim");
    if (spec.output_dim != action_dim) throw ContractViolation("Denoiser: output_dim != action_dim");
    if (timestep_embed_dim % 2 != 0) throw ContractViolation("Denoiser: embedding dim must be even");
    if (static_cast<std::size_t>(norm.obs_dim()) != obs_dim ||
        static_cast<std::size_t>(norm.action_dim()) != action_dim)
      throw ContractViolation("Denoiser: NormStats dims do not match");
    nn::check_params(spec, params);
  }

  void check_schedule(const NoiseSchedule& s) const {
    if (s.K() != K) throw ContractViolation("Denoiser K does not match the noise schedule");
  }
};

inline nn::MlpSpec denoiser_spec(std::size_t obs_dim, std::size_t action_dim,
                                 std::vector<std::size_t> hidden, nn::Activation act,
                                 std::size_t embed_dim = 16) {
  return nn::MlpSpec{obs_dim + action_dim + embed_dim, std::move(hidden), action_dim, act};
}

/// Fresh denoiser: Kaiming-uniform hidden layers, zero final layer (so the
/// initial prediction is exactly zero).
inline Denoiser init_denoiser(const nn::MlpSpec& spec, std::size_t obs_dim, std::size_t action_dim, int K,
                              const NormStats& norm, nn::Rng& rng) {
  Denoiser d;
  d.spec = spec;
  d.obs_dim = obs_dim;
  d.action_dim = action_dim;
  d.K = K;
  d.timestep_embed_dim = spec.input_dim - obs_dim - action_dim;
  d.norm = norm;
  d.params = nn::init_params(spec, rng, {.zero_final_layer = true});
  d.validate();
  return d;
}

/// Assemble the network input for a batch. `obs_n` may have 1 row (broadcast)
/// or one row per sample; `ks` likewise.
inline Tensor2 denoiser_input(const Denoiser& d, const Tensor2& x_n, std::span<const int> ks, const Tensor2& obs_n) {
  const Eigen::Index B = x_n.rows();
  const auto od = static_cast<Eigen::Index>(d.obs_dim);
  const auto ad = static_cast<Eigen::Index>(d.action_dim);
  const auto ed = static_cast<Eigen::Index>(d.timestep_embed_dim);
  if (x_n.cols() != ad) throw ContractViolation("denoiser: action width mismatch");
  if (obs_n.cols() != od || (obs_n.rows() != B && obs_n.rows() != 1))
    throw ContractViolation("denoiser: observation shape mismatch (expected obs_dim " + std::to_string(od) + ")");
  if (ks.size() != static_cast<std::size_t>(B) && ks.size() != 1)
    throw ContractViolation("denoiser: step count must be 1 or one per row");

  Tensor2 in(B, od + ad + ed);
  if (od > 0) {
    if (obs_n.rows() == 1)
      in.leftCols(od).rowwise() = obs_n.row(0);
    else
      in.leftCols(od) = obs_n;
  }
  in.middleCols(od, ad) = x_n;
  std::vector<double> emb(static_cast<std::size_t>(ed));
  int last_k = -1;
  for (Eigen::Index r = 0; r < B; ++r) {
    const int k = ks.size() == 1 ? ks[0] : ks[static_cast<std::size_t>(r)];
    if (k < 1 || k > d.K) throw ContractViolation("denoiser: step " + std::to_string(k) + " out of [1, K]");
    if (k != last_k) {
      timestep_embedding(k, d.K, emb);
      last_k = k;
    }
    for (Eigen::Index c = 0; c < ed; ++c) in(r, od + ad + c) = emb[static_cast<std::size_t>(c)];
  }
  return in;
}

/// eps_theta on normalized inputs, batched.
inline Tensor2 predict_eps(const Denoiser& d, const Tensor2& x_n, std::span<const int> ks, const Tensor2& obs_n) {
  return nn::forward_batch(d.spec, d.params, denoiser_input(d, x_n, ks, obs_n));
}

inline Tensor2 predict_eps(const Denoiser& d, const Tensor2& x_n, int k, const Tensor2& obs_n) {
  const int ks[1] = {k};
  return predict_eps(d, x_n, std::span<const int>(ks, 1), obs_n);
}

inline Vec predict_eps(const Denoiser& d, const Vec& x_n, int k, const Vec& obs_n) {
  Tensor2 x = x_n.transpose();
  Tensor2 o = obs_n.transpose();
  if (d.obs_dim == 0) o.resize(1, 0);
  return predict_eps(d, x, k, o).row(0).transpose();
}

/// mu = (x_k - (1 - alpha_k) / sqrt(1 - abar_k) * eps) / sqrt(alpha_k).
template <typename X, typename E>
auto mu_from_eps(const NoiseSchedule& s, const Eigen::MatrixBase<X>& x_k, int k, const Eigen::MatrixBase<E>& eps) {
  const double a = s.alpha(k);
  const double coef = (1.0 - a) / std::sqrt(1.0 - s.alpha_bar(k));
  return ((x_k - coef * eps) / std::sqrt(a)).eval();
}

/// Posterior mean of the reverse step using the network (normalized space).
inline Vec mu_from_eps(const NoiseSchedule& s, const Denoiser& d, const Vec& x_k, int k, const Vec& obs_n) {
  d.check_schedule(s);
  return mu_from_eps(s, x_k, k, predict_eps(d, x_k, k, obs_n));
}

}  // namespace diffpilot::diffusion
