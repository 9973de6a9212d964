#pragma once

#include <Eigen/Dense>

namespace roughflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Path values, one row per grid point, one column per component.
using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VecIn = Eigen::Ref<const Vector>;
using VecOut = Eigen::Ref<Vector>;
using MatOut = Eigen::Ref<Matrix>;

}  // namespace roughflow
