#pragma once

#include <Eigen/Dense>

namespace memcap {

// Samples are rows, so row-major storage keeps each sample contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ColMatrix = Eigen::MatrixXd;

}  // namespace memcap
