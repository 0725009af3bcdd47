#pragma once

#include <cmath>
#include <numbers>

#include "gsde/linalg.hpp"

namespace testing {

inline gsde::Vector vec(double v) { return gsde::Vector::Constant(1, v); }

inline double gaussian_pdf(double x, double mean, double var)
{
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

inline double poisson_pmf(int k, double mean)
{
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

} // namespace testing
