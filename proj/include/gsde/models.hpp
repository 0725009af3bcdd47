#pragma once

#include "gsde/coefficient_field.hpp"
#include "gsde/linalg.hpp"

namespace gsde {

/// Coefficients together with the mark measure that drives their jumps.
struct Model {
    CoefficientField coeffs;
    MarkMeasure measure;
};

namespace models {

/// a = b = g = 0 in dimension n.
Model static_system(std::size_t n = 1);

/// a = const, b = g = 0.
Model constant_drift(double a);

/// a = α x (Liouville test flow).
Model linear_drift(double alpha);

/// dx = b dw.
Model heat(double b);

/// dx = −θ x dt + b dw.
Model ornstein_uhlenbeck(double theta, double b);

/// dx = μ x dt + σ x dw.
Model geometric_brownian(double mu, double sigma);

/// dx = h dν, one mark with rate λ.
Model pure_jump(double h, double rate);

/// dx = c x dν, one mark with rate λ.
Model multiplicative_jump(double c, double rate);

/// dx = −θ x dt + b dw + c x dν (all terms on).
Model jump_diffusion(double theta, double b, double c, double rate);

/// 2D rotation noise dx = σ R x dw with R the quarter turn.
Model rotation_noise(double sigma);

/// Linear jump maps g = γ·c·x in 1D (one atom γ = c) and g = γ·C·x in 2D
/// (one atom γ = 1), both with rate 1.
Model linear_jump_1d(double c);
Model linear_jump_2d(const Matrix& C);

} // namespace models

} // namespace gsde
