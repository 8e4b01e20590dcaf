#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "diffpilot/copilot/copilot.hpp"
#include "diffpilot/json_io.hpp"

namespace diffpilot::copilot {

struct BoundParams {
  int d = 2;
  double kappa = 0.0;
  double delta = 0.05;

  void validate() const {
    if (d < 1) throw ConfigError("bound: d must be >= 1");
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("bound: kappa must be finite and >= 0");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("bound: delta must lie in (0, 1)");
  }
};

/// High-probability bound on the squared displacement after partial
/// diffusion to k_sw, with sigma^2 := 1 - alpha_bar(k_sw):
///   sigma^2 (kappa sigma^2 + d + 2 sqrt(-d log delta) - 2 log delta)
inline double displacement_bound(const NoiseSchedule& s, const BoundParams& p, int k_sw) {
  p.validate();
  if (k_sw < 1 || k_sw > s.K()) throw ContractViolation("displacement_bound: k_sw out of [1, K]");
  const double var = 1.0 - s.alpha_bar(k_sw);
  const double ld = std::log(p.delta);
  const double dd = static_cast<double>(p.d);
  return var * (p.kappa * var + dd + 2.0 * std::sqrt(-dd * ld) - 2.0 * ld);
}

/// Noisy normalized actions, timesteps and normalized observations at which
/// the denoiser's output norm is probed.
struct ProbeSet {
  Tensor2 x_n;
  std::vector<int> ks;
  Tensor2 obs_n;

  Eigen::Index size() const { return x_n.rows(); }
};

/// n probes built by forward-diffusing randomly chosen dataset actions to
/// uniformly drawn k in [1, K].
inline ProbeSet make_probe_set(const Denoiser& d, const NoiseSchedule& s, const Tensor2& obs, const Tensor2& act,
                               Eigen::Index n, nn::Rng& rng) {
  if (act.rows() == 0 || n < 1) throw ContractViolation("make_probe_set: need a nonempty dataset and n >= 1");
  if (obs.rows() != act.rows()) throw ContractViolation("make_probe_set: obs/act row mismatch");
  const Tensor2 obs_n = d.norm.normalize_obs(obs);
  const Tensor2 act_n = d.norm.normalize_act(act);
  ProbeSet p{Tensor2(n, act.cols()), std::vector<int>(static_cast<std::size_t>(n)), Tensor2(n, obs.cols())};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(act.rows())));
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.K())));
    p.ks[static_cast<std::size_t>(r)] = k;
    const double ab = s.alpha_bar(k);
    for (Eigen::Index c = 0; c < act.cols(); ++c)
      p.x_n(r, c) = std::sqrt(ab) * act_n(i, c) + std::sqrt(1.0 - ab) * rng.normal();
    if (obs.cols() > 0) p.obs_n.row(r) = obs_n.row(i);
  }
  return p;
}

/// Max of ||eps_theta|| over the probe set.
inline double estimate_kappa(const Denoiser& d, const NoiseSchedule& s, const ProbeSet& probes) {
  d.check_schedule(s);
  if (probes.size() == 0) throw ContractViolation("estimate_kappa: empty probe set");
  if (probes.ks.size() != static_cast<std::size_t>(probes.size()) || probes.obs_n.rows() != probes.size())
    throw ContractViolation("estimate_kappa: inconsistent probe set");
  for (int k : probes.ks)
    if (k < 1 || k > s.K()) throw ContractViolation("estimate_kappa: probe step out of [1, K]");
  constexpr Eigen::Index chunk = 4096;
  double kappa = 0.0;
  for (Eigen::Index r0 = 0; r0 < probes.size(); r0 += chunk) {
    const Eigen::Index len = std::min(chunk, probes.size() - r0);
    const Tensor2 eps = predict_eps(d, probes.x_n.middleRows(r0, len),
                                    std::span<const int>(probes.ks.data() + r0, static_cast<std::size_t>(len)),
                                    probes.obs_n.middleRows(r0, len));
    kappa = std::max(kappa, eps.rowwise().norm().maxCoeff());
  }
  return kappa;
}

struct DisplacementStats {
  double gamma = 0.0;
  int k_sw = 0;
  double mean_sq_disp = 0.0;
  double std_error = 0.0;
  double p50 = 0.0, p90 = 0.0, p99 = 0.0;
  double bound_value = 0.0;
  double violation_rate = 0.0;
};

/// Linear-interpolation quantile of an ascending-sorted sample.
inline double sorted_quantile(const std::vector<double>& v, double q) {
  if (v.empty()) throw ContractViolation("quantile of empty sample");
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// A batch of (goal-stripped observation, pilot action) pairs in world units.
struct SourceBatch {
  Tensor2 obs;
  Tensor2 act;
};
using SourceSampler = std::function<SourceBatch(Eigen::Index n, nn::Rng& rng)>;

/// Per-gamma squared displacement ||a_src - a_shared||^2, measured in
/// normalized action space. Every gamma sees the same source draws.
inline std::vector<DisplacementStats> displacement_sweep(const Denoiser& d, const NoiseSchedule& s,
                                                         const SourceSampler& source, const std::vector<double>& gammas,
                                                         Eigen::Index n, const BoundParams& bp, nn::Rng& rng,
                                                         const std::optional<ActionBox>& box = std::nullopt) {
  if (n < 1) throw ContractViolation("displacement_sweep: n must be >= 1");
  bp.validate();
  nn::Rng src_rng = rng.derive(0);
  const SourceBatch src = source(n, src_rng);
  if (src.act.rows() != n) throw ContractViolation("displacement_sweep: sampler returned the wrong count");
  const Tensor2 src_n = d.norm.normalize_act(src.act);

  std::vector<DisplacementStats> out;
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    const auto cfg = CopilotConfig::make(gammas[g], s.K());
    std::vector<nn::Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(n));
    const nn::Rng cell = rng.derive(1 + g);
    for (Eigen::Index i = 0; i < n; ++i) rngs.push_back(cell.derive(static_cast<std::uint64_t>(i)));
    const Tensor2 shared = copilot_act_batch(d, s, src.obs, src.act, cfg, rngs, box);
    const Tensor2 diff = d.norm.normalize_act(shared) - src_n;

    std::vector<double> sq(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) sq[static_cast<std::size_t>(i)] = diff.row(i).squaredNorm();

    DisplacementStats st;
    st.gamma = gammas[g];
    st.k_sw = cfg.k_sw();
    double sum = 0.0;
    for (double v : sq) sum += v;
    st.mean_sq_disp = sum / static_cast<double>(n);
    double var = 0.0;
    for (double v : sq) var += (v - st.mean_sq_disp) * (v - st.mean_sq_disp);
    st.std_error = n > 1 ? std::sqrt(var / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    if (st.k_sw > 0) {
      st.bound_value = displacement_bound(s, bp, st.k_sw);
      std::size_t viol = 0;
      for (double v : sq) viol += v > st.bound_value ? 1 : 0;
      st.violation_rate = static_cast<double>(viol) / static_cast<double>(n);
    }
    std::sort(sq.begin(), sq.end());
    st.p50 = sorted_quantile(sq, 0.50);
    st.p90 = sorted_quantile(sq, 0.90);
    st.p99 = sorted_quantile(sq, 0.99);
    out.push_back(st);
  }
  return out;
}

inline void write_displacement_csv(std::ostream& os, const std::vector<DisplacementStats>& rows) {
  os << "gamma,mean_sq_disp,p50,p90,p99,bound,violation_rate\n";
  for (const auto& r : rows)
    os << format_real(r.gamma) << ',' << format_real(r.mean_sq_disp) << ',' << format_real(r.p50) << ','
       << format_real(r.p90) << ',' << format_real(r.p99) << ',' << format_real(r.bound_value) << ','
       << format_real(r.violation_rate) << '\n';
}

}  // namespace diffpilot::copilot
