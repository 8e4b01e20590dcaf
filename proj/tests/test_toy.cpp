#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "diffpilot/toy/toy2d.hpp"

using namespace diffpilot;
using namespace diffpilot::toy;

namespace {

// Barycentric coordinates of p by Cramer's rule.
std::array<double, 3> barycentric(const std::array<Point, 3>& v, const Point& p) {
  const double det = (v[1].y() - v[2].y()) * (v[0].x() - v[2].x()) + (v[2].x() - v[1].x()) * (v[0].y() - v[2].y());
  const double l0 = ((v[1].y() - v[2].y()) * (p.x() - v[2].x()) + (v[2].x() - v[1].x()) * (p.y() - v[2].y())) / det;
  const double l1 = ((v[2].y() - v[0].y()) * (p.x() - v[2].x()) + (v[0].x() - v[2].x()) * (p.y() - v[2].y())) / det;
  return {l0, l1, 1.0 - l0 - l1};
}

copilot::Denoiser untrained_toy(int K, std::uint64_t seed) {
  nn::Rng r(seed);
  const auto spec = diffusion::denoiser_spec(0, 2, {16}, nn::Activation::relu);
  diffusion::NormStats n{nn::Vec(0), nn::Vec(0), nn::Vec::Zero(2), nn::Vec::Ones(2)};
  return diffusion::init_denoiser(spec, 0, 2, K, n, r);
}

}  // namespace

TEST(Triangle, EquilateralGeometry) {
  const auto v = equilateral_vertices(1.0);
  EXPECT_NEAR(v[0].x(), 0.0, 1e-15);
  EXPECT_NEAR(v[0].y(), 1.0, 1e-15);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(v[static_cast<std::size_t>(i)].norm(), 1.0, 1e-15);
    EXPECT_NEAR((v[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>((i + 1) % 3)]).norm(), std::sqrt(3.0), 1e-12);
  }
  TriangleSource src;
  EXPECT_NEAR(src.signed_area(), 3.0 * std::sqrt(3.0) / 4.0, 1e-12);
  EXPECT_LT(src.centroid().norm(), 1e-15);
}

TEST(Triangle, DegenerateRejected) {
  TriangleSource src;
  src.vertices = {Point(0, 0), Point(1, 1), Point(2, 2)};
  EXPECT_THROW(src.validate(), ConfigError);
  nn::Rng r(0);
  EXPECT_THROW(sample_triangle(src, r, 10), ConfigError);
  EXPECT_THROW(sample_triangle(TriangleSource{}, r, 0), ContractViolation);
}

TEST(Triangle, SamplesInsideClosedTriangle) {
  TriangleSource src;
  src.vertices = {Point(0.3, -2.0), Point(4.0, 1.0), Point(-1.0, 0.5)};
  nn::Rng r(1);
  const auto pts = sample_triangle(src, r, 100000);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const auto l = barycentric(src.vertices, pts.row(i).transpose());
    ASSERT_GE(std::min({l[0], l[1], l[2]}), -1e-12);
  }
}

TEST(Triangle, CentroidWithinThreeSigma) {
  TriangleSource src;
  nn::Rng r(2);
  const Eigen::Index n = 100000;
  const auto pts = sample_triangle(src, r, n);
  const Eigen::RowVector2d mean = pts.colwise().mean();
  for (int c = 0; c < 2; ++c) {
    const double sd = std::sqrt((pts.col(c).array() - mean[c]).square().sum() / (n - 1));
    EXPECT_LT(std::abs(mean[c] - src.centroid()[c]), 3.0 * sd / std::sqrt(static_cast<double>(n)));
  }
}

TEST(Triangle, MidpointSubtrianglesEachHoldAQuarter) {
  TriangleSource src;
  nn::Rng r(3);
  const auto pts = sample_triangle(src, r, 100000);
  std::array<int, 4> counts{};
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const auto l = barycentric(src.vertices, pts.row(i).transpose());
    int cell = 3;  // the central, inverted sub-triangle
    for (int v = 0; v < 3; ++v)
      if (l[static_cast<std::size_t>(v)] > 0.5) cell = v;
    ++counts[static_cast<std::size_t>(cell)];
  }
  for (int c : counts) EXPECT_NEAR(c / 100000.0, 0.25, 0.01);
}

TEST(Trimodal, SingleModeWeights) {
  TrimodalTarget t;
  t.weights = {1.0, 0.0, 0.0};
  nn::Rng r(4);
  const auto pts = sample_trimodal(t, r, 5000);
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    ASSERT_LT((Point(pts.row(i).transpose()) - t.centers[0]).norm(), 6.0 * t.mode_sigma);
}

TEST(Trimodal, EqualWeightFractions) {
  TrimodalTarget t;
  nn::Rng r(5);
  const auto pts = sample_trimodal(t, r, 30000);
  std::array<int, 3> counts{};
  for (Eigen::Index i = 0; i < pts.rows(); ++i) ++counts[static_cast<std::size_t>(nearest_mode(t, pts.row(i).transpose()))];
  for (int c : counts) EXPECT_NEAR(c / 30000.0, 1.0 / 3.0, 0.02);
}

TEST(Trimodal, ZeroSigmaGivesCenters) {
  TrimodalTarget t;
  t.mode_sigma = 0.0;
  nn::Rng r(6);
  const auto pts = sample_trimodal(t, r, 300);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Point p = pts.row(i).transpose();
    ASSERT_EQ(p, t.centers[static_cast<std::size_t>(nearest_mode(t, p))]);
  }
}

TEST(Trimodal, Validation) {
  TrimodalTarget t;
  t.weights = {0.5, 0.5, 0.5};
  EXPECT_THROW(t.validate(), ConfigError);
  t.weights = {1.2, -0.1, -0.1};
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrimodalTarget{};
  t.mode_sigma = -1;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Labels, RegionLabelIsNearestVertex) {
  TriangleSource src;
  EXPECT_EQ(region_label(src, Point(0.0, 0.8)), 0);
  EXPECT_EQ(region_label(src, src.vertices[1] * 0.9), 1);
  EXPECT_EQ(region_label(src, src.vertices[2] * 0.9), 2);
}

TEST(PartialGrid, ZeroSwitchIsIdentityAndSharesSources) {
  const auto s = diffusion::make_default_schedule(200);
  const auto d = untrained_toy(200, 1);
  nn::Rng r(7);
  const auto cells = run_partial_grid(d, s, TriangleSource{}, {0, 40, 200}, 500, r);
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[0].out, cells[0].src);
  EXPECT_EQ(cells[1].src, cells[0].src);
  EXPECT_EQ(cells[2].labels, cells[0].labels);
  EXPECT_NE(cells[1].out, cells[1].src);
  // Source centers coincide with the modes, so nothing is mixed at k_sw = 0.
  EXPECT_EQ(label_mixing_score(cells[0], TrimodalTarget{}), 0.0);
}

TEST(PartialGrid, DeterministicForSeed) {
  const auto s = diffusion::make_default_schedule(200);
  const auto d = untrained_toy(200, 1);
  nn::Rng a(9), b(9);
  const auto ca = run_partial_grid(d, s, TriangleSource{}, {20, 100}, 200, a);
  const auto cb = run_partial_grid(d, s, TriangleSource{}, {20, 100}, 200, b);
  EXPECT_EQ(ca[0].out, cb[0].out);
  EXPECT_EQ(ca[1].out, cb[1].out);
}

TEST(PartialGrid, RejectsConditionalModel) {
  const auto s = diffusion::make_default_schedule(50);
  nn::Rng r(0);
  const auto spec = diffusion::denoiser_spec(1, 2, {8}, nn::Activation::relu);
  diffusion::NormStats n{nn::Vec::Zero(1), nn::Vec::Ones(1), nn::Vec::Zero(2), nn::Vec::Ones(2)};
  const auto d = diffusion::init_denoiser(spec, 1, 2, 50, n, r);
  EXPECT_THROW(run_partial_grid(d, s, TriangleSource{}, {0}, 10, r), ContractViolation);
}

TEST(PartialGrid, CsvAndSvg) {
  const auto s = diffusion::make_default_schedule(200);
  const auto d = untrained_toy(200, 1);
  nn::Rng r(8);
  const auto cells = run_partial_grid(d, s, TriangleSource{}, {0, 100}, 50, r);
  std::ostringstream csv, svg;
  write_grid_csv(csv, cells);
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "k_sw,src_x,src_y,out_x,out_y,region_label");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 101);
  write_grid_svg(svg, cells, 200);
  EXPECT_EQ(svg.str().rfind("<svg", 0), 0u);
  EXPECT_NE(svg.str().find("k_sw = 100 / 200"), std::string::npos);
}

TEST(ToyTraining, SmallRunIsDeterministic) {
  ToyTrainConfig cfg;
  cfg.K = 25;
  cfg.n_data = 500;
  cfg.train.steps = 30;
  cfg.train.batch_size = 16;
  cfg.train.hidden = {8};
  nn::Rng a(3), b(3);
  const auto da = train_toy_model(TrimodalTarget{}, cfg, a);
  const auto db = train_toy_model(TrimodalTarget{}, cfg, b);
  EXPECT_EQ(da.obs_dim, 0u);
  EXPECT_EQ(da.K, 25);
  EXPECT_EQ(da.params.layers.back().w, db.params.layers.back().w);
}
