#pragma once

#include <Eigen/Dense>

namespace latte {

/// Row-major so that one table row or one token is one contiguous matrix row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

}  // namespace latte
