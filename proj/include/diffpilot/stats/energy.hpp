#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "diffpilot/nn/rng.hpp"

namespace diffpilot::stats {

using nn::Tensor2;

struct EnergyDistance {
  double value = 0.0;
  double std_error = 0.0;  // first-order (Hoeffding projection) standard error
};

/// Two-sample energy distance, V-statistic form:
///   2 E|X - Y| - E|X - X'| - E|Y - Y'|
/// (diagonal pairs included, so two samples of one law give a small positive
/// floor of order 1/n).
inline EnergyDistance energy_distance(const Tensor2& X, const Tensor2& Y) {
  if (X.rows() == 0 || Y.rows() == 0 || X.cols() != Y.cols())
    throw ContractViolation("energy_distance: need nonempty point clouds of equal dimension");
  const Eigen::Index n = X.rows(), m = Y.rows();
  std::vector<double> xy_row(static_cast<std::size_t>(n), 0.0), xy_col(static_cast<std::size_t>(m), 0.0);
  std::vector<double> xx_row(static_cast<std::size_t>(n), 0.0), yy_row(static_cast<std::size_t>(m), 0.0);

  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double dist = (X.row(i) - Y.row(j)).norm();
      xy_row[static_cast<std::size_t>(i)] += dist;
      xy_col[static_cast<std::size_t>(j)] += dist;
    }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = (X.row(i) - X.row(j)).norm();
      xx_row[static_cast<std::size_t>(i)] += dist;
      xx_row[static_cast<std::size_t>(j)] += dist;
    }
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double dist = (Y.row(i) - Y.row(j)).norm();
      yy_row[static_cast<std::size_t>(i)] += dist;
      yy_row[static_cast<std::size_t>(j)] += dist;
    }

  double sxy = 0, sxx = 0, syy = 0;
  for (double v : xy_row) sxy += v;
  for (double v : xx_row) sxx += v;
  for (double v : yy_row) syy += v;
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  EnergyDistance out;
  out.value = 2.0 * sxy / (dn * dm) - sxx / (dn * dn) - syy / (dm * dm);

  // Influence of each point on the statistic.
  auto variance = [](const std::vector<double>& h) {
    double mean = 0;
    for (double v : h) mean += v;
    mean /= static_cast<double>(h.size());
    double var = 0;
    for (double v : h) var += (v - mean) * (v - mean);
    return var / static_cast<double>(h.size());
  };
  std::vector<double> hx(static_cast<std::size_t>(n)), hy(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < hx.size(); ++i) hx[i] = 2.0 * xy_row[i] / dm - 2.0 * xx_row[i] / dn;
  for (std::size_t j = 0; j < hy.size(); ++j) hy[j] = 2.0 * xy_col[j] / dn - 2.0 * yy_row[j] / dm;
  out.std_error = std::sqrt(variance(hx) / dn + variance(hy) / dm);
  return out;
}

struct NoiseFloor {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> replicates;
};

/// Distribution of the energy distance between two independent n-point
/// samples of the same law, over `reps` replicate pairs.
inline NoiseFloor self_distance_floor(const std::function<Tensor2(Eigen::Index, nn::Rng&)>& sampler, Eigen::Index n,
                                      int reps, nn::Rng& rng) {
  if (reps < 2) throw ContractViolation("self_distance_floor: reps must be >= 2");
  NoiseFloor f;
  for (int r = 0; r < reps; ++r) {
    const Tensor2 a = sampler(n, rng);
    const Tensor2 b = sampler(n, rng);
    f.replicates.push_back(energy_distance(a, b).value);
  }
  for (double v : f.replicates) f.mean += v;
  f.mean /= reps;
  for (double v : f.replicates) f.sd += (v - f.mean) * (v - f.mean);
  f.sd = std::sqrt(f.sd / (reps - 1));
  return f;
}

}  // namespace diffpilot::stats
