#include "gsde/models.hpp"

#include "gsde/error.hpp"

namespace gsde::models {

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }
Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }

std::vector<Matrix> zero_diffusion_jacobian(std::size_t n, std::size_t m)
{
    return std::vector<Matrix>(m, Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
}

std::vector<std::vector<Matrix>> zero_diffusion_hessian(std::size_t n, std::size_t m)
{
    const auto nn = static_cast<Eigen::Index>(n);
    return std::vector<std::vector<Matrix>>(m, std::vector<Matrix>(n, Matrix::Zero(nn, nn)));
}

void add_constant_diffusion(CoefficientField& f, double b)
{
    f.with_diffusion([b](double, const Vector&) { return scalar_matrix(b); },
                     [](double, const Vector&) { return zero_diffusion_jacobian(1, 1); },
                     [](double, const Vector&) { return zero_diffusion_hessian(1, 1); });
}

void add_linear_drift(CoefficientField& f, double alpha)
{
    f.with_drift([alpha](double, const Vector& x) -> Vector { return alpha * x; },
                 [alpha](double, const Vector&) { return scalar_matrix(alpha); });
}

void add_multiplicative_jump(CoefficientField& f, double c)
{
    f.with_jump([c](double, const Vector& x, const Vector&) -> Vector { return c * x; }, true,
                [c](double, const Vector&, const Vector&) { return scalar_matrix(c); });
}

} // namespace

Model static_system(std::size_t n) { return {CoefficientField(n, 1), MarkMeasure::none()}; }

Model constant_drift(double a)
{
    CoefficientField f(1, 1);
    f.with_drift([a](double, const Vector&) { return scalar(a); },
                 [](double, const Vector&) { return scalar_matrix(0.0); });
    return {f, MarkMeasure::none()};
}

Model linear_drift(double alpha)
{
    CoefficientField f(1, 1);
    add_linear_drift(f, alpha);
    return {f, MarkMeasure::none()};
}

Model heat(double b)
{
    CoefficientField f(1, 1);
    add_constant_diffusion(f, b);
    return {f, MarkMeasure::none()};
}

Model ornstein_uhlenbeck(double theta, double b)
{
    CoefficientField f(1, 1);
    add_linear_drift(f, -theta);
    add_constant_diffusion(f, b);
    return {f, MarkMeasure::none()};
}

Model geometric_brownian(double mu, double sigma)
{
    CoefficientField f(1, 1);
    add_linear_drift(f, mu);
    f.with_diffusion([sigma](double, const Vector& x) { return scalar_matrix(sigma * x[0]); },
                     [sigma](double, const Vector&) { return std::vector<Matrix>{scalar_matrix(sigma)}; },
                     [](double, const Vector&) { return zero_diffusion_hessian(1, 1); });
    return {f, MarkMeasure::none()};
}

Model pure_jump(double h, double rate)
{
    CoefficientField f(1, 1);
    f.with_jump([h](double, const Vector&, const Vector&) { return scalar(h); }, false,
                [](double, const Vector&, const Vector&) { return scalar_matrix(0.0); });
    return {f, MarkMeasure::single(scalar(h), rate)};
}

Model multiplicative_jump(double c, double rate)
{
    if (!(c > -1.0)) throw InvalidArgument("multiplicative jump needs c > -1");
    CoefficientField f(1, 1);
    add_multiplicative_jump(f, c);
    return {f, MarkMeasure::single(scalar(c), rate)};
}

Model jump_diffusion(double theta, double b, double c, double rate)
{
    if (!(c > -1.0)) throw InvalidArgument("multiplicative jump needs c > -1");
    CoefficientField f(1, 1);
    add_linear_drift(f, -theta);
    add_constant_diffusion(f, b);
    add_multiplicative_jump(f, c);
    return {f, MarkMeasure::single(scalar(c), rate)};
}

Model rotation_noise(double sigma)
{
    Matrix R(2, 2);
    R << 0.0, -1.0, 1.0, 0.0;
    CoefficientField f(2, 1);
    f.with_diffusion([sigma, R](double, const Vector& x) -> Matrix { return sigma * R * x; },
                     [sigma, R](double, const Vector&) { return std::vector<Matrix>{sigma * R}; },
                     [](double, const Vector&) { return zero_diffusion_hessian(2, 1); });
    return {f, MarkMeasure::none()};
}

Model linear_jump_1d(double c)
{
    CoefficientField f(1, 1);
    f.with_jump([](double, const Vector& x, const Vector& mark) -> Vector { return mark[0] * x; }, true,
                [](double, const Vector&, const Vector& mark) { return scalar_matrix(mark[0]); });
    return {f, MarkMeasure::single(scalar(c), 1.0)};
}

Model linear_jump_2d(const Matrix& C)
{
    if (C.rows() != 2 || C.cols() != 2) throw InvalidArgument("2D jump map needs a 2x2 matrix");
    CoefficientField f(2, 1);
    f.with_jump([C](double, const Vector& x, const Vector& mark) -> Vector { return mark[0] * (C * x); }, true,
                [C](double, const Vector&, const Vector& mark) -> Matrix { return mark[0] * C; });
    return {f, MarkMeasure::single(scalar(1.0), 1.0)};
}

} // namespace gsde::models
