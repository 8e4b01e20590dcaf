#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "diffpilot/copilot/bound.hpp"
#include "diffpilot/stats/energy.hpp"

using namespace diffpilot;
using namespace diffpilot::copilot;
using diffusion::make_default_schedule;

namespace {

Denoiser make_denoiser(std::size_t obs_dim, int K, std::uint64_t seed, double final_scale = 0.0) {
  nn::Rng r(seed);
  const auto spec = diffusion::denoiser_spec(obs_dim, 2, {16, 16}, nn::Activation::silu);
  diffusion::NormStats n{nn::Vec::Constant(static_cast<Eigen::Index>(obs_dim), 0.2),
                         nn::Vec::Constant(static_cast<Eigen::Index>(obs_dim), 0.5), nn::Vec::Constant(2, 0.1),
                         nn::Vec::Constant(2, 0.4)};
  Denoiser d = diffusion::init_denoiser(spec, obs_dim, 2, K, n, r);
  if (final_scale != 0.0)
    for (Eigen::Index i = 0; i < d.params.layers.back().w.size(); ++i)
      d.params.layers.back().w.data()[i] = final_scale * r.normal();
  return d;
}

ActionBox unit_box() { return {nn::Vec::Constant(2, -1.0), nn::Vec::Constant(2, 1.0)}; }

}  // namespace

TEST(SwitchStep, RoundHalfUp) {
  EXPECT_EQ(switch_step(0.0, 50), 0);
  EXPECT_EQ(switch_step(1.0, 50), 50);
  EXPECT_EQ(switch_step(0.41, 50), 21);  // 20.5 -> 21
  EXPECT_EQ(switch_step(0.4, 50), 20);
  EXPECT_EQ(switch_step(0.5, 3), 2);    // 1.5 -> 2
  EXPECT_EQ(switch_step(0.1, 200), 20);
  EXPECT_THROW(switch_step(-0.01, 50), ConfigError);
  EXPECT_THROW(switch_step(1.01, 50), ConfigError);
  EXPECT_THROW(switch_step(std::nan(""), 50), ConfigError);
  EXPECT_THROW(CopilotConfig::make(2.0, 50), ConfigError);
}

TEST(CopilotAct, GammaZeroIsBitExactPassThrough) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 1, 0.5);
  const auto cfg = CopilotConfig::make(0.0, 50);
  nn::Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const nn::Vec obs = 3.0 * r.gauss(4);
    nn::Vec a(2);
    a << r.uniform(-1, 1), r.uniform(-1, 1);
    const auto before = r.counter();
    ASSERT_EQ(copilot_act(d, s, obs, a, cfg, r, unit_box()), a);
    ASSERT_EQ(r.counter(), before);
  }
}

TEST(CopilotAct, SingleStepIsDeterministicMuOfNoisedAction) {
  // k_sw = 1: x_1 = sqrt(ab_1) x + sqrt(1 - ab_1) eps, then mu(x_1, 1) with no noise.
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 2, 0.3);
  const auto cfg = CopilotConfig::make(0.02, 50);
  ASSERT_EQ(cfg.k_sw(), 1);
  nn::Vec obs(4), a(2);
  obs << 0.1, 0.5, -0.2, 0.0;
  a << 0.3, -0.6;
  nn::Rng r1(10), r2(10);
  const nn::Vec out = copilot_act(d, s, obs, a, cfg, r1);
  const nn::Vec eps = r2.gauss(2);
  const nn::Vec x1 = diffusion::forward_diffuse(s, d.norm.normalize_act(a), 1, eps);
  const nn::Vec mu = diffusion::mu_from_eps(s, d, x1, 1, d.norm.normalize_obs(obs));
  EXPECT_LT((out - d.norm.denormalize_act(mu)).norm(), 1e-14);
}

TEST(CopilotAct, MatchesHandWrittenLoop) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 4, 0.3);
  const auto cfg = CopilotConfig::make(0.3, 50);
  nn::Vec obs(4), a(2);
  obs << 0.4, 0.1, 0.05, -0.02;
  a << -0.5, 0.9;
  nn::Rng r1(6), r2(6);
  const nn::Vec out = copilot_act(d, s, obs, a, cfg, r1);
  const nn::Vec on = d.norm.normalize_obs(obs);
  nn::Vec x = diffusion::forward_diffuse(s, d.norm.normalize_act(a), 15, r2.gauss(2));
  for (int k = 15; k >= 1; --k) {
    x = diffusion::mu_from_eps(s, d, x, k, on);
    const nn::Vec z = r2.gauss(2);
    if (k > 1) x += s.sigma(k) * z;
  }
  EXPECT_LT((out - d.norm.denormalize_act(x)).norm(), 1e-13);
}

TEST(CopilotAct, OutputClampedToBox) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 5, 2.0);
  const auto cfg = CopilotConfig::make(1.0, 50);
  nn::Rng r(1);
  for (int i = 0; i < 200; ++i) {
    nn::Vec a(2);
    a << r.uniform(-1, 1), r.uniform(-1, 1);
    const nn::Vec out = copilot_act(d, s, r.gauss(4), a, cfg, r, unit_box());
    ASSERT_TRUE(unit_box().contains(out));
  }
}

TEST(CopilotAct, Contracts) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 1);
  nn::Rng r(0);
  nn::Vec a(2);
  a << 1.5, 0.0;
  EXPECT_THROW(copilot_act(d, s, nn::Vec::Zero(4), a, CopilotConfig::make(0.5, 50), r, unit_box()), ContractViolation);
  EXPECT_THROW(copilot_act(d, s, nn::Vec::Zero(4), a, CopilotConfig::make(0.0, 50), r, unit_box()), ContractViolation);
  EXPECT_THROW(copilot_act(d, s, nn::Vec::Zero(6), nn::Vec::Zero(2), CopilotConfig::make(0.5, 50), r), ContractViolation);
  EXPECT_THROW(copilot_act(d, make_default_schedule(60), nn::Vec::Zero(4), nn::Vec::Zero(2), CopilotConfig::make(0.5, 60), r),
               ContractViolation);
}

TEST(CopilotAct, BatchRowsUseTheirOwnGenerators) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 8, 0.3);
  const auto cfg = CopilotConfig::make(0.6, 50);
  nn::Rng r(2);
  nn::Tensor2 obs(3, 4), act(3, 2);
  for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = r.normal();
  for (Eigen::Index i = 0; i < act.size(); ++i) act.data()[i] = r.uniform(-1, 1);
  std::vector<nn::Rng> rngs = {nn::Rng(10), nn::Rng(11), nn::Rng(12)};
  const nn::Tensor2 out = copilot_act_batch(d, s, obs, act, cfg, rngs);
  nn::Rng single(11);
  const nn::Vec one = copilot_act(d, s, obs.row(1).transpose(), act.row(1).transpose(), cfg, single);
  // Same noise stream; only GEMM blocking differs between batch and single row.
  EXPECT_LT((nn::Vec(out.row(1).transpose()) - one).norm(), 1e-12 * one.norm());
  EXPECT_EQ(single.counter(), rngs[1].counter());
}

TEST(DisplacementBound, TailTermArithmetic) {
  const auto s = make_default_schedule(50);
  const BoundParams p{2, 0.0, 0.05};
  const double var = 1 - s.alpha_bar(20);
  const double tail = 2 + 2 * std::sqrt(2 * std::log(20.0)) + 2 * std::log(20.0);
  EXPECT_NEAR(tail, 12.887, 1e-3);
  EXPECT_NEAR(displacement_bound(s, p, 20), var * tail, 1e-12);
  const BoundParams q{2, 3.0, 0.05};
  EXPECT_NEAR(displacement_bound(s, q, 20), var * (3.0 * var + tail), 1e-12);
}

TEST(DisplacementBound, IncreasingInSwitchStep) {
  const auto s = make_default_schedule(50);
  const BoundParams p{2, 1.5, 0.2};
  double prev = 0;
  for (int k = 1; k <= 50; ++k) {
    const double b = displacement_bound(s, p, k);
    ASSERT_GT(b, prev);
    prev = b;
  }
}

TEST(DisplacementBound, RejectsBadInputs) {
  const auto s = make_default_schedule(50);
  EXPECT_THROW(displacement_bound(s, {2, 1.0, 0.0}, 5), ConfigError);
  EXPECT_THROW(displacement_bound(s, {2, 1.0, 1.0}, 5), ConfigError);
  EXPECT_THROW(displacement_bound(s, {0, 1.0, 0.1}, 5), ConfigError);
  EXPECT_THROW(displacement_bound(s, {2, -1.0, 0.1}, 5), ConfigError);
  EXPECT_THROW(displacement_bound(s, {2, 1.0, 0.1}, 0), ContractViolation);
  EXPECT_THROW(displacement_bound(s, {2, 1.0, 0.1}, 51), ContractViolation);
}

TEST(EstimateKappa, ZeroDenoiserGivesZero) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 1);
  nn::Rng r(0);
  nn::Tensor2 obs(100, 4), act(100, 2);
  for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = r.normal();
  for (Eigen::Index i = 0; i < act.size(); ++i) act.data()[i] = r.normal();
  const auto probes = make_probe_set(d, s, obs, act, 1000, r);
  EXPECT_EQ(estimate_kappa(d, s, probes), 0.0);
}

TEST(EstimateKappa, SingleProbeIsItsNorm) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 2, 0.7);
  ProbeSet p{nn::Tensor2(1, 2), {17}, nn::Tensor2(1, 4)};
  p.x_n << 0.3, -1.2;
  p.obs_n << 0.1, 0.2, 0.3, 0.4;
  const nn::Vec e = diffusion::predict_eps(d, nn::Vec(p.x_n.row(0).transpose()), 17, nn::Vec(p.obs_n.row(0).transpose()));
  EXPECT_DOUBLE_EQ(estimate_kappa(d, s, p), e.norm());
}

TEST(EstimateKappa, SupersetMaxDominatesSubsets) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 3, 0.7);
  nn::Rng r(4);
  nn::Tensor2 obs(500, 4), act(500, 2);
  for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = r.normal();
  for (Eigen::Index i = 0; i < act.size(); ++i) act.data()[i] = r.normal();
  const auto full = make_probe_set(d, s, obs, act, 10000, r);
  const double k_full = estimate_kappa(d, s, full);
  for (Eigen::Index len : {1, 10, 4096, 5000}) {
    const Eigen::Index start = static_cast<Eigen::Index>(r.below(static_cast<std::uint64_t>(10000 - len + 1)));
    ProbeSet sub{full.x_n.middleRows(start, len),
                 std::vector<int>(full.ks.begin() + start, full.ks.begin() + start + len),
                 full.obs_n.middleRows(start, len)};
    EXPECT_LE(estimate_kappa(d, s, sub), k_full);
  }
  // The chunked maximum equals a row-by-row maximum.
  double naive = 0;
  for (Eigen::Index i = 0; i < full.size(); ++i)
    naive = std::max(naive, diffusion::predict_eps(d, nn::Vec(full.x_n.row(i).transpose()), full.ks[static_cast<std::size_t>(i)],
                                                   nn::Vec(full.obs_n.row(i).transpose()))
                                .norm());
  EXPECT_DOUBLE_EQ(k_full, naive);
}

TEST(EstimateKappa, EmptyProbeSetThrows) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 1);
  EXPECT_THROW(estimate_kappa(d, s, ProbeSet{nn::Tensor2(0, 2), {}, nn::Tensor2(0, 4)}), ContractViolation);
}

TEST(DisplacementSweep, ZeroRowAndOrdering) {
  const auto s = make_default_schedule(50);
  const Denoiser d = make_denoiser(4, 50, 9, 0.3);
  const SourceSampler src = [](Eigen::Index n, nn::Rng& r) {
    SourceBatch b{nn::Tensor2(n, 4), nn::Tensor2(n, 2)};
    for (Eigen::Index i = 0; i < b.obs.size(); ++i) b.obs.data()[i] = r.normal();
    for (Eigen::Index i = 0; i < b.act.size(); ++i) b.act.data()[i] = r.uniform(-1, 1);
    return b;
  };
  nn::Rng r(1);
  const auto rows = displacement_sweep(d, s, src, {0.0, 0.2, 0.6, 1.0}, 2000, {2, 1.0, 0.05}, r);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].mean_sq_disp, 0.0);
  EXPECT_EQ(rows[0].violation_rate, 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GT(rows[i].mean_sq_disp, rows[i - 1].mean_sq_disp);
    EXPECT_GE(rows[i].violation_rate, 0.0);
    EXPECT_LE(rows[i].violation_rate, 1.0);
    EXPECT_LE(rows[i].p50, rows[i].p90);
    EXPECT_LE(rows[i].p90, rows[i].p99);
  }
  std::ostringstream os;
  write_displacement_csv(os, rows);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "gamma,mean_sq_disp,p50,p90,p99,bound,violation_rate");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> v = {1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.9), 4.6);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 1.0), 5.0);
}

TEST(EnergyDistance, MatchesBruteForce) {
  nn::Rng r(3);
  nn::Tensor2 X(40, 2), Y(30, 2);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = r.normal();
  for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = 0.5 + r.normal();
  double xy = 0, xx = 0, yy = 0;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 30; ++j) xy += (X.row(i) - Y.row(j)).norm();
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) xx += (X.row(i) - X.row(j)).norm();
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) yy += (Y.row(i) - Y.row(j)).norm();
  const double expect = 2 * xy / (40 * 30) - xx / (40 * 40) - yy / (30 * 30);
  EXPECT_NEAR(stats::energy_distance(X, Y).value, expect, 1e-12);
  EXPECT_NEAR(stats::energy_distance(X, X).value, 0.0, 1e-12);
}

TEST(EnergyDistance, SeparatesShiftedLaws) {
  nn::Rng r(5);
  auto gauss = [](Eigen::Index n, nn::Rng& g, double shift) {
    nn::Tensor2 t(n, 2);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = shift + g.normal();
    return t;
  };
  const auto floor =
      stats::self_distance_floor([&](Eigen::Index n, nn::Rng& g) { return gauss(n, g, 0.0); }, 500, 10, r);
  const auto ed = stats::energy_distance(gauss(500, r, 0.0), gauss(500, r, 0.5));
  EXPECT_GT(ed.value, floor.mean + 5 * floor.sd);
  EXPECT_GT(ed.std_error, 0.0);
  EXPECT_LT(ed.std_error, ed.value);
}

TEST(EnergyDistance, StdErrorTracksReplicateSpread) {
  // The projection standard error should match the spread of the statistic
  // across independent replicates when the laws differ.
  nn::Rng r(8);
  auto draw = [&](double shift) {
    nn::Tensor2 t(400, 2);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = shift + r.normal();
    return t;
  };
  std::vector<double> vals;
  double se_mean = 0;
  for (int i = 0; i < 60; ++i) {
    const auto ed = stats::energy_distance(draw(0.0), draw(0.6));
    vals.push_back(ed.value);
    se_mean += ed.std_error / 60;
  }
  double m = 0;
  for (double v : vals) m += v / 60;
  double sd = 0;
  for (double v : vals) sd += (v - m) * (v - m) / 59;
  sd = std::sqrt(sd);
  EXPECT_GT(se_mean, 0.7 * sd);
  EXPECT_LT(se_mean, 1.4 * sd);
}

TEST(EnergyDistance, Contracts) {
  EXPECT_THROW(stats::energy_distance(nn::Tensor2(0, 2), nn::Tensor2(3, 2)), ContractViolation);
  EXPECT_THROW(stats::energy_distance(nn::Tensor2(3, 1), nn::Tensor2(3, 2)), ContractViolation);
}
