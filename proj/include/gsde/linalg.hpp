#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

namespace gsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Central finite-difference step for coordinate value `x`.
inline double fd_step(double x) { return std::max(1e-6, 1e-6 * std::abs(x)); }

std::string format_vector(const Vector& v);

} // namespace gsde
