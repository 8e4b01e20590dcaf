#pragma once

#include <cmath>
#include <string>

#include "diffpilot/nn/mlp.hpp"

namespace diffpilot::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update, in place. Gradients are validated before
/// anything is modified, so a rejected step leaves `p` untouched.
inline void adam_step(ParamStore& p, const Gradients& grads, double lr, const AdamConfig& cfg = {}) {
  if (grads.size() != p.layers.size()) throw ContractViolation("adam_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    const auto& g = grads[l];
    const auto& L = p.layers[l];
    if (g.w.rows() != L.w.rows() || g.w.cols() != L.w.cols() || g.b.size() != L.b.size())
      throw ContractViolation("adam_step: gradient shape mismatch in layer " + std::to_string(l));
    if (!g.w.allFinite()) throw NumericError("non-finite gradient in layer " + std::to_string(l) + " weights");
    if (!g.b.allFinite()) throw NumericError("non-finite gradient in layer " + std::to_string(l) + " bias");
  }
  if (p.m.size() != p.layers.size()) p.m = zeros_like(p.layers);
  if (p.v.size() != p.layers.size()) p.v = zeros_like(p.layers);

  ++p.step_count;
  const double t = static_cast<double>(p.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  };
  for (std::size_t l = 0; l < grads.size(); ++l) {
    update(p.layers[l].w, p.m[l].w, p.v[l].w, grads[l].w);
    update(p.layers[l].b, p.m[l].b, p.v[l].b, grads[l].b);
  }
}

}  // namespace diffpilot::nn
