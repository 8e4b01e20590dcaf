#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "diffpilot/error.hpp"

namespace diffpilot::nn {

/// Row-major dense matrix of 64-bit reals. Weight matrices are stored
/// (out_dim x in_dim); batches are stored one sample per row.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const std::string& what) {
  if (!x.allFinite()) throw NumericError("non-finite value in " + what);
}

}  // namespace diffpilot::nn
