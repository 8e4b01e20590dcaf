#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "diffpilot/nn/rng.hpp"
#include "diffpilot/nn/tensor.hpp"

namespace diffpilot::nn {

enum class Activation { relu, silu };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "silu"; }

inline Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "silu") return Activation::silu;
  throw ConfigError("unknown activation: " + std::string(s));
}

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  Activation activation = Activation::relu;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }

  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_dims[l - 1]; }
  std::size_t layer_out(std::size_t l) const {
    return l == hidden_dims.size() ? output_dim : hidden_dims[l];
  }

  void validate() const {
    if (input_dim < 1 || output_dim < 1) throw ConfigError("MlpSpec: dims must be >= 1");
    if (hidden_dims.empty()) throw ConfigError("MlpSpec: hidden_dims must be nonempty");
    for (auto h : hidden_dims)
      if (h < 1) throw ConfigError("MlpSpec: hidden dims must be >= 1");
  }

  bool operator==(const MlpSpec&) const = default;
};

struct Layer {
  Tensor2 w;  // (out x in)
  Vec b;      // (out)
};

using Gradients = std::vector<Layer>;

/// Trainable parameters plus the Adam moment accumulators.
struct ParamStore {
  std::vector<Layer> layers;
  std::vector<Layer> m;
  std::vector<Layer> v;
  std::uint64_t step_count = 0;
};

inline Gradients zeros_like(const std::vector<Layer>& layers) {
  Gradients g;
  g.reserve(layers.size());
  for (const auto& l : layers)
    g.push_back({Tensor2::Zero(l.w.rows(), l.w.cols()), Vec::Zero(l.b.size())});
  return g;
}

inline void check_params(const MlpSpec& spec, const ParamStore& p) {
  if (p.layers.size() != spec.num_layers())
    throw ContractViolation("ParamStore layer count does not match MlpSpec");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    if (static_cast<std::size_t>(L.w.rows()) != spec.layer_out(l) ||
        static_cast<std::size_t>(L.w.cols()) != spec.layer_in(l) ||
        static_cast<std::size_t>(L.b.size()) != spec.layer_out(l))
      throw ContractViolation("ParamStore layer " + std::to_string(l) + " shape does not match MlpSpec");
  }
}

struct InitOptions {
  bool zero_final_layer = false;
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
inline ParamStore init_params(const MlpSpec& spec, Rng& rng, InitOptions opts = {}) {
  spec.validate();
  ParamStore p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.layer_in(l));
    const auto out = static_cast<Eigen::Index>(spec.layer_out(l));
    Layer layer{Tensor2::Zero(out, in), Vec::Zero(out)};
    const bool zero = opts.zero_final_layer && l + 1 == spec.num_layers();
    if (!zero) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in));
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.w(r, c) = rng.uniform(-bound, bound);
    }
    p.layers.push_back(std::move(layer));
  }
  p.m = zeros_like(p.layers);
  p.v = zeros_like(p.layers);
  return p;
}

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void activate(Activation a, const Tensor2& z, Tensor2& h) {
  if (a == Activation::relu) {
    h = z.cwiseMax(0.0);
  } else {
    h = z.unaryExpr([](double x) { return x * sigmoid(x); });
  }
}

// dL/dz given dL/dh, in place.
inline void activate_backward(Activation a, const Tensor2& z, Tensor2& grad) {
  if (a == Activation::relu) {
    grad = (z.array() > 0.0).select(grad, 0.0);
  } else {
    grad.array() *= z.unaryExpr([](double x) {
                       const double s = sigmoid(x);
                       return s * (1.0 + x * (1.0 - s));
                     }).array();
  }
}

}  // namespace detail

/// Intermediate values kept by a batched forward pass for backprop.
struct ForwardCache {
  Tensor2 input;
  std::vector<Tensor2> pre;   // pre-activations of hidden layers
  std::vector<Tensor2> post;  // activations of hidden layers
};

/// Batched forward pass: one sample per row of `x`.
inline Tensor2 forward_batch(const MlpSpec& spec, const ParamStore& p, const Tensor2& x,
                             ForwardCache* cache = nullptr) {
  if (static_cast<std::size_t>(x.cols()) != spec.input_dim)
    throw ContractViolation("mlp forward: input has " + std::to_string(x.cols()) +
                            " columns, expected " + std::to_string(spec.input_dim));
  check_params(spec, p);
  require_finite(x, "mlp input");

  const std::size_t n_hidden = spec.hidden_dims.size();
  Tensor2 h = x;
  Tensor2 z;
  if (cache) {
    cache->input = x;
    cache->pre.resize(n_hidden);
    cache->post.resize(n_hidden);
  }
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const auto& L = p.layers[l];
    z.noalias() = h * L.w.transpose();
    z.rowwise() += L.b.transpose();
    detail::activate(spec.activation, z, h);
    if (cache) {
      cache->pre[l] = z;
      cache->post[l] = h;
    }
  }
  const auto& last = p.layers.back();
  Tensor2 out;
  out.noalias() = h * last.w.transpose();
  out.rowwise() += last.b.transpose();
  return out;
}

/// Gradients of sum_rows <output_grad_row, f(x_row)> with respect to every
/// parameter, given the cache of the matching forward pass.
inline Gradients backward_batch(const MlpSpec& spec, const ParamStore& p, const ForwardCache& cache,
                                const Tensor2& output_grad) {
  const std::size_t n_hidden = spec.hidden_dims.size();
  if (static_cast<std::size_t>(output_grad.cols()) != spec.output_dim ||
      output_grad.rows() != cache.input.rows() || cache.pre.size() != n_hidden)
    throw ContractViolation("mlp backward: output_grad shape does not match the forward pass");

  Gradients grads(spec.num_layers());
  Tensor2 g = output_grad;
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const Tensor2& below = l == 0 ? cache.input : cache.post[l - 1];
    grads[l].w.noalias() = g.transpose() * below;
    grads[l].b = g.colwise().sum().transpose();
    if (l == 0) break;
    Tensor2 gh;
    gh.noalias() = g * p.layers[l].w;
    detail::activate_backward(spec.activation, cache.pre[l - 1], gh);
    g = std::move(gh);
  }
  return grads;
}

inline Vec mlp_forward(const MlpSpec& spec, const ParamStore& p, const Vec& input) {
  if (static_cast<std::size_t>(input.size()) != spec.input_dim)
    throw ContractViolation("mlp_forward: input length " + std::to_string(input.size()) +
                            " != input_dim " + std::to_string(spec.input_dim));
  Tensor2 x = input.transpose();
  return forward_batch(spec, p, x).row(0).transpose();
}

inline Gradients mlp_backward(const MlpSpec& spec, const ParamStore& p, const Vec& input,
                              const Vec& output_grad) {
  if (static_cast<std::size_t>(output_grad.size()) != spec.output_dim)
    throw ContractViolation("mlp_backward: output_grad length does not match output_dim");
  if (static_cast<std::size_t>(input.size()) != spec.input_dim)
    throw ContractViolation("mlp_backward: input length does not match input_dim");
  ForwardCache cache;
  Tensor2 x = input.transpose();
  forward_batch(spec, p, x, &cache);
  Tensor2 g = output_grad.transpose();
  return backward_batch(spec, p, cache, g);
}

}  // namespace diffpilot::nn
