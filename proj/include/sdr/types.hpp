#pragma once

#include <Eigen/Core>

namespace sdr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Relative eigenvalue cutoff used by the pseudo-inverse conventions.
inline constexpr double kDefaultRelTol = 1e-10;

}  // namespace sdr
