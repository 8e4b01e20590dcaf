#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <vector>

#include "diffpilot/copilot/copilot.hpp"
#include "diffpilot/diffusion/train.hpp"
#include "diffpilot/json_io.hpp"

namespace diffpilot::toy {

using Point = Eigen::Vector2d;
using nn::Tensor2;

/// Vertices of the equilateral triangle with circumradius r centred at the
/// origin, first vertex pointing up.
inline std::array<Point, 3> equilateral_vertices(double r = 1.0) {
  std::array<Point, 3> v;
  for (int i = 0; i < 3; ++i) {
    const double a = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * i / 3.0;
    v[static_cast<std::size_t>(i)] = Point(r * std::cos(a), r * std::sin(a));
  }
  return v;
}

struct TriangleSource {
  std::array<Point, 3> vertices = equilateral_vertices();

  double signed_area() const {
    const Point e1 = vertices[1] - vertices[0], e2 = vertices[2] - vertices[0];
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
  }
  void validate() const {
    if (!(std::abs(signed_area()) > 1e-12)) throw ConfigError("triangle source is degenerate");
  }
  Point centroid() const { return (vertices[0] + vertices[1] + vertices[2]) / 3.0; }

  /// Closed-triangle membership with a small tolerance.
  bool contains(const Point& p, double tol = 1e-12) const {
    auto cross = [](const Point& a, const Point& b, const Point& c) {
      return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    };
    const double s = signed_area() > 0 ? 1.0 : -1.0;
    return s * cross(vertices[0], vertices[1], p) >= -tol && s * cross(vertices[1], vertices[2], p) >= -tol &&
           s * cross(vertices[2], vertices[0], p) >= -tol;
  }
};

struct TrimodalTarget {
  std::array<Point, 3> centers = equilateral_vertices();
  double mode_sigma = 0.1;
  std::array<double, 3> weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  void validate() const {
    if (!(mode_sigma >= 0.0) || !std::isfinite(mode_sigma)) throw ConfigError("mode_sigma must be finite and >= 0");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ConfigError("mixture weights must be nonnegative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
  }
};

/// Uniform points in the triangle (barycentric draw with reflection).
inline Tensor2 sample_triangle(const TriangleSource& src, nn::Rng& rng, Eigen::Index n) {
  src.validate();
  if (n < 1) throw ContractViolation("sample_triangle: n must be >= 1");
  const Point a = src.vertices[0], e1 = src.vertices[1] - a, e2 = src.vertices[2] - a;
  Tensor2 out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.row(i) = (a + u * e1 + v * e2).transpose();
  }
  return out;
}

inline std::size_t draw_mode(const TrimodalTarget& t, nn::Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t m = 0; m < 2; ++m) {
    acc += t.weights[m];
    if (u < acc) return m;
  }
  return 2;
}

inline Tensor2 sample_trimodal(const TrimodalTarget& t, nn::Rng& rng, Eigen::Index n) {
  t.validate();
  if (n < 1) throw ContractViolation("sample_trimodal: n must be >= 1");
  Tensor2 out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point& c = t.centers[draw_mode(t, rng)];
    const double zx = rng.normal(), zy = rng.normal();
    out(i, 0) = c.x() + t.mode_sigma * zx;
    out(i, 1) = c.y() + t.mode_sigma * zy;
  }
  return out;
}

/// Index of the nearest of three points.
inline int nearest_of(const std::array<Point, 3>& pts, const Point& p) {
  int best = 0;
  double bd = (p - pts[0]).squaredNorm();
  for (int m = 1; m < 3; ++m) {
    const double dd = (p - pts[static_cast<std::size_t>(m)]).squaredNorm();
    if (dd < bd) {
      bd = dd;
      best = m;
    }
  }
  return best;
}

inline int nearest_mode(const TrimodalTarget& t, const Point& p) { return nearest_of(t.centers, p); }

/// Source-region label: which vertex's third of the triangle a point lies in.
inline int region_label(const TriangleSource& src, const Point& p) { return nearest_of(src.vertices, p); }

struct ToyTrainConfig {
  int K = 200;
  Eigen::Index n_data = 50000;
  diffusion::TrainConfig train = [] {
    diffusion::TrainConfig c;
    c.hidden = {128, 128, 128};
    c.lr = 1e-3;
    return c;
  }();
};

/// Unconditional (obs_dim = 0) denoiser trained on target samples.
inline copilot::Denoiser train_toy_model(const TrimodalTarget& tgt, const ToyTrainConfig& cfg, nn::Rng& rng,
                                         diffusion::NoiseSchedule* schedule_out = nullptr,
                                         diffusion::TrainReport* report = nullptr,
                                         const diffusion::ProgressFn& progress = {}) {
  nn::Rng data_rng = rng.derive(0);
  nn::Rng train_rng = rng.derive(1);
  diffusion::TrainingData data;
  data.act = sample_trimodal(tgt, data_rng, cfg.n_data);
  data.obs = Tensor2(cfg.n_data, 0);
  data.norm = diffusion::NormStats::compute(data.obs, data.act);
  const auto s = diffusion::make_default_schedule(cfg.K);
  if (schedule_out) *schedule_out = s;
  return diffusion::train_denoiser(data, s, cfg.train, train_rng, report, progress);
}

struct GridCell {
  int k_sw = 0;
  Tensor2 src;
  Tensor2 out;
  std::vector<int> labels;
};

/// For each k_sw: n triangle points pushed through forward-then-reverse
/// diffusion to k_sw. All cells share the same source points.
inline std::vector<GridCell> run_partial_grid(const copilot::Denoiser& d, const diffusion::NoiseSchedule& s,
                                              const TriangleSource& src, const std::vector<int>& k_sw_list,
                                              Eigen::Index n, nn::Rng& rng) {
  d.check_schedule(s);
  if (d.obs_dim != 0 || d.action_dim != 2) throw ContractViolation("run_partial_grid: needs an unconditional 2D model");
  nn::Rng src_rng = rng.derive(0);
  const Tensor2 pts = sample_triangle(src, src_rng, n);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = region_label(src, pts.row(i).transpose());
  const Tensor2 x_n = d.norm.normalize_act(pts);
  const Tensor2 obs_n(n, 0);

  std::vector<GridCell> cells;
  for (std::size_t c = 0; c < k_sw_list.size(); ++c) {
    const int k_sw = k_sw_list[c];
    nn::Rng cell_rng = rng.derive(1 + c);
    const Tensor2 out_n = copilot::partial_diffuse(s, diffusion::bind_denoiser(d, obs_n), x_n, k_sw,
                                                   diffusion::shared_noise(cell_rng));
    cells.push_back({k_sw, pts, k_sw == 0 ? pts : d.norm.denormalize_act(out_n), labels});
  }
  return cells;
}

/// Fraction of transported points whose nearest mode is not their source
/// region's vertex.
inline double label_mixing_score(const GridCell& cell, const TrimodalTarget& tgt) {
  if (cell.out.rows() == 0) throw ContractViolation("label_mixing_score: empty cell");
  std::size_t mixed = 0;
  for (Eigen::Index i = 0; i < cell.out.rows(); ++i)
    mixed += nearest_mode(tgt, cell.out.row(i).transpose()) != cell.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  return static_cast<double>(mixed) / static_cast<double>(cell.out.rows());
}

inline void write_grid_csv(std::ostream& os, const std::vector<GridCell>& cells) {
  os << "k_sw,src_x,src_y,out_x,out_y,region_label\n";
  for (const auto& c : cells)
    for (Eigen::Index i = 0; i < c.out.rows(); ++i)
      os << c.k_sw << ',' << format_real(c.src(i, 0)) << ',' << format_real(c.src(i, 1)) << ','
         << format_real(c.out(i, 0)) << ',' << format_real(c.out(i, 1)) << ',' << c.labels[static_cast<std::size_t>(i)]
         << '\n';
}

/// One panel per k_sw, points coloured by source region.
inline void write_grid_svg(std::ostream& os, const std::vector<GridCell>& cells, int K, std::size_t max_points = 2000) {
  constexpr double panel = 220.0, pad = 10.0, extent = 1.6;
  const char* colours[3] = {"#d62728", "#2ca02c", "#1f77b4"};
  const double width = pad + static_cast<double>(cells.size()) * (panel + pad);
  const double height = panel + 2 * pad + 20.0;
  os << std::setprecision(5);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const double x0 = pad + static_cast<double>(c) * (panel + pad);
    os << "<g transform=\"translate(" << x0 << ',' << pad << ")\">\n";
    os << "<rect width=\"" << panel << "\" height=\"" << panel << "\" fill=\"none\" stroke=\"#888\"/>\n";
    const auto& cell = cells[c];
    const auto n = std::min<std::size_t>(max_points, static_cast<std::size_t>(cell.out.rows()));
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double px = (cell.out(r, 0) + extent) / (2 * extent) * panel;
      const double py = (extent - cell.out(r, 1)) / (2 * extent) * panel;
      if (px < 0 || px > panel || py < 0 || py > panel) continue;
      os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"1.2\" fill=\"" << colours[cell.labels[i] % 3]
         << "\" fill-opacity=\"0.6\"/>\n";
    }
    os << "<text x=\"" << panel / 2 << "\" y=\"" << panel + 16 << "\" text-anchor=\"middle\" font-size=\"12\">k_sw = "
       << cell.k_sw << " / " << K << "</text>\n</g>\n";
  }
  os << "</svg>\n";
}

}  // namespace diffpilot::toy
