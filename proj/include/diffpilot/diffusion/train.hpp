#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "diffpilot/diffusion/denoiser.hpp"
#include "diffpilot/nn/adam.hpp"

namespace diffpilot::diffusion {

/// Paired observations and actions in world units, plus their statistics.
struct TrainingData {
  Tensor2 obs;  // (N x obs_dim), obs_dim may be 0
  Tensor2 act;  // (N x action_dim)
  NormStats norm;

  Eigen::Index size() const { return act.rows(); }
};

struct TrainConfig {
  int steps = 20000;
  int batch_size = 256;
  double lr = 1e-3;
  std::vector<std::size_t> hidden = {256, 256, 256};
  nn::Activation activation = nn::Activation::relu;
  std::size_t timestep_embed_dim = 16;
  double ema_decay = 0.99;  // smoothing of the reported running loss
  int log_every = 1000;
  bool cosine_lr = true;     // decay lr to 0 over the run
  double param_ema = 0.999;  // > 0: return an exponential moving average of the weights
};

struct TrainReport {
  double final_running_loss = 0.0;
  int steps = 0;
  std::vector<std::pair<int, double>> history;  // (step, running loss) every log_every steps
};

using ProgressFn = std::function<void(int step, double running_loss)>;

namespace detail {

struct Minibatch {
  Tensor2 input;  // network input
  Tensor2 eps;    // regression target
};

// Draws record, k ~ U{1..K} and eps ~ N(0, I) per row and builds the noisy input.
inline Minibatch draw_minibatch(const Denoiser& d, const NoiseSchedule& s, const Tensor2& obs_n,
                                const Tensor2& act_n, int batch, const Tensor2& embed_table, nn::Rng& rng) {
  const auto od = static_cast<Eigen::Index>(d.obs_dim);
  const auto ad = static_cast<Eigen::Index>(d.action_dim);
  const auto ed = static_cast<Eigen::Index>(d.timestep_embed_dim);
  const auto N = static_cast<std::uint64_t>(act_n.rows());
  Minibatch mb{Tensor2(batch, od + ad + ed), Tensor2(batch, ad)};
  for (int r = 0; r < batch; ++r) {
    const auto i = static_cast<Eigen::Index>(rng.below(N));
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.K())));
    const double ab = s.alpha_bar(k);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    if (od > 0) mb.input.row(r).head(od) = obs_n.row(i);
    for (Eigen::Index c = 0; c < ad; ++c) {
      const double e = rng.normal();
      mb.eps(r, c) = e;
      mb.input(r, od + c) = sa * act_n(i, c) + sn * e;
    }
    mb.input.row(r).tail(ed) = embed_table.row(k - 1);
  }
  return mb;
}

inline Tensor2 embedding_table(int K, std::size_t dim) {
  Tensor2 t(K, static_cast<Eigen::Index>(dim));
  std::vector<double> buf(dim);
  for (int k = 1; k <= K; ++k) {
    timestep_embedding(k, K, buf);
    for (std::size_t c = 0; c < dim; ++c) t(k - 1, static_cast<Eigen::Index>(c)) = buf[c];
  }
  return t;
}

}  // namespace detail

/// Mean DDPM loss ||eps - eps_theta||^2 over n fresh (record, k, eps) draws.
inline double evaluate_loss(const Denoiser& d, const NoiseSchedule& s, const TrainingData& data, int n, nn::Rng& rng) {
  d.check_schedule(s);
  const Tensor2 obs_n = d.norm.normalize_obs(data.obs);
  const Tensor2 act_n = d.norm.normalize_act(data.act);
  const Tensor2 table = detail::embedding_table(s.K(), d.timestep_embed_dim);
  double total = 0.0;
  int done = 0;
  while (done < n) {
    const int b = std::min(1024, n - done);
    const auto mb = detail::draw_minibatch(d, s, obs_n, act_n, b, table, rng);
    const Tensor2 pred = nn::forward_batch(d.spec, d.params, mb.input);
    total += (pred - mb.eps).squaredNorm();
    done += b;
  }
  return total / n;
}

/// Minibatch DDPM training: per row sample a record, k ~ U{1..K} and
/// eps ~ N(0, I), regress eps_theta(x_k, k | obs) onto eps under squared error,
/// and take an Adam step on the batch-mean loss.
inline Denoiser train_denoiser(const TrainingData& data, const NoiseSchedule& s, const TrainConfig& cfg, nn::Rng& rng,
                               TrainReport* report = nullptr, const ProgressFn& progress = {}) {
  if (data.size() == 0) throw ContractViolation("train_denoiser: empty dataset");
  if (data.obs.rows() != data.act.rows()) throw ContractViolation("train_denoiser: obs/act row counts differ");
  if (cfg.steps < 0 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) throw ConfigError("train_denoiser: invalid TrainConfig");
  data.norm.validate();
  if (!data.obs.allFinite() || !data.act.allFinite()) throw NumericError("train_denoiser: non-finite training data");

  const auto od = static_cast<std::size_t>(data.obs.cols());
  const auto ad = static_cast<std::size_t>(data.act.cols());
  const auto spec = denoiser_spec(od, ad, cfg.hidden, cfg.activation, cfg.timestep_embed_dim);
  Denoiser d = init_denoiser(spec, od, ad, s.K(), data.norm, rng);

  const Tensor2 obs_n = d.norm.normalize_obs(data.obs);
  const Tensor2 act_n = d.norm.normalize_act(data.act);
  const Tensor2 table = detail::embedding_table(s.K(), d.timestep_embed_dim);

  if (!(cfg.param_ema >= 0.0 && cfg.param_ema < 1.0)) throw ConfigError("train_denoiser: param_ema must lie in [0, 1)");
  std::vector<nn::Layer> avg = d.params.layers;

  TrainReport rep;
  double running = 0.0;
  nn::ForwardCache cache;
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto mb = detail::draw_minibatch(d, s, obs_n, act_n, cfg.batch_size, table, rng);
    const Tensor2 pred = nn::forward_batch(d.spec, d.params, mb.input, &cache);
    const Tensor2 diff = pred - mb.eps;
    const double loss = diff.squaredNorm() / cfg.batch_size;
    if (!std::isfinite(loss))
      throw NumericError("train_denoiser: non-finite loss at step " + std::to_string(step) +
                         " (running loss " + std::to_string(running) + ")");
    running = step == 1 ? loss : cfg.ema_decay * running + (1.0 - cfg.ema_decay) * loss;
    const Tensor2 grad_out = (2.0 / cfg.batch_size) * diff;
    const auto grads = nn::backward_batch(d.spec, d.params, cache, grad_out);
    const double lr =
        cfg.cosine_lr ? 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * (step - 1) / cfg.steps)) : cfg.lr;
    nn::adam_step(d.params, grads, lr);
    if (cfg.param_ema > 0.0) {
      for (std::size_t l = 0; l < avg.size(); ++l) {
        avg[l].w = cfg.param_ema * avg[l].w + (1.0 - cfg.param_ema) * d.params.layers[l].w;
        avg[l].b = cfg.param_ema * avg[l].b + (1.0 - cfg.param_ema) * d.params.layers[l].b;
      }
    }
    if (cfg.log_every > 0 && step % cfg.log_every == 0) {
      rep.history.emplace_back(step, running);
      if (progress) progress(step, running);
    }
  }
  if (cfg.param_ema > 0.0) d.params.layers = std::move(avg);
  rep.final_running_loss = running;
  rep.steps = cfg.steps;
  if (report) *report = std::move(rep);
  return d;
}

}  // namespace diffpilot::diffusion
