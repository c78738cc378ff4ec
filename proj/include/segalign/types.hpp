// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace segalign {

// Row-major so that row i is frame / token / sample i.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr int kMaxSegments = 5;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace segalign
