#pragma once

// Reference implementations used as test oracles. They deliberately avoid the
// library's Eigen code paths: plain loops over std::vector.

#include <cmath>
#include <vector>

#include "diffpilot/diffusion/schedule.hpp"
#include "diffpilot/nn/mlp.hpp"

namespace oracle {

using diffpilot::nn::Activation;
using diffpilot::nn::MlpSpec;
using diffpilot::nn::ParamStore;

inline double act(Activation a, double z) { return a == Activation::relu ? (z > 0 ? z : 0.0) : z / (1.0 + std::exp(-z)); }

/// Naive forward pass, one layer at a time.
inline std::vector<double> forward(const MlpSpec& spec, const ParamStore& p, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& W = p.layers[l].w;
    const auto& b = p.layers[l].b;
    std::vector<double> z(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double acc = b[r];
      for (Eigen::Index c = 0; c < W.cols(); ++c) acc += W(r, c) * h[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = l + 1 < p.layers.size() ? act(spec.activation, acc) : acc;
    }
    h = std::move(z);
  }
  return h;
}

/// Scalar loss <g, f(x)> used for gradient checks.
inline double dot_loss(const MlpSpec& spec, const ParamStore& p, const std::vector<double>& x,
                       const std::vector<double>& g) {
  const auto y = forward(spec, p, x);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
  return s;
}

inline double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

/// Product of (1 - beta) over a linear beta ramp, written out directly.
inline double alpha_bar_linear(int K, double b0, double b1, int k) {
  double prod = 1.0;
  for (int i = 1; i <= k; ++i) {
    const double beta = K == 1 ? b0 : b0 + (b1 - b0) * (i - 1) / (K - 1);
    prod *= 1.0 - beta;
  }
  return prod;
}

/// Optimal noise prediction for data ~ N(m, s^2 I):
///   eps*(x_k, k) = sqrt(1 - ab) (x_k - sqrt(ab) m) / (ab s^2 + 1 - ab)
inline double gaussian_eps(double x, double ab, double m, double s) {
  return std::sqrt(1.0 - ab) * (x - std::sqrt(ab) * m) / (ab * s * s + 1.0 - ab);
}

/// Posterior mean E[x_{k-1} | x_k] under Gaussian data, from the joint of (x0, x_{k-1}, x_k).
inline double gaussian_posterior_mean(double x, int k, const diffpilot::diffusion::NoiseSchedule& sch, double m,
                                      double s) {
  const double abk = sch.alpha_bar(k), abp = sch.alpha_bar(k - 1), a = sch.alpha(k);
  // x_{k-1} = sqrt(abp) x0 + sqrt(1-abp) e1;  x_k = sqrt(a) x_{k-1} + sqrt(1-a) e2
  const double mean_prev = std::sqrt(abp) * m, mean_k = std::sqrt(abk) * m;
  const double var_prev = abp * s * s + 1.0 - abp;
  const double cov = std::sqrt(a) * var_prev;
  const double var_k = abk * s * s + 1.0 - abk;
  return mean_prev + cov / var_k * (x - mean_k);
}

}  // namespace oracle
