#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gsde/coefficient_field.hpp"
#include "gsde/linalg.hpp"
#include "gsde/parallel.hpp"
#include "gsde/sample_path.hpp"

namespace gsde {

/// A scalar field F(t, x) that may depend on the realized noise.
///
/// Missing gradient/hessian callbacks fall back to central differences when
/// `allow_fd` is set; otherwise asking for them raises DerivativeUnavailable.
/// `noise_dim` and `mark_count`, when set, pin the shape of the noise context
/// the field expects.
struct RandomScalarField {
    using ValueFn = std::function<double(double, const Vector&, const NoiseContext&)>;
    using GradientFn = std::function<Vector(double, const Vector&, const NoiseContext&)>;
    using HessianFn = std::function<Matrix(double, const Vector&, const NoiseContext&)>;

    ValueFn value;
    GradientFn gradient;
    HessianFn hessian;
    bool allow_fd = true;
    std::optional<std::size_t> noise_dim;
    std::optional<std::size_t> mark_count;

    double operator()(double t, const Vector& x, const NoiseContext& ctx) const { return value(t, x, ctx); }
    Vector gradient_at(double t, const Vector& x, const NoiseContext& ctx) const;
    Matrix hessian_at(double t, const Vector& x, const NoiseContext& ctx) const;

    Vector gradient_fd(double t, const Vector& x, const NoiseContext& ctx) const;
    Matrix hessian_fd(double t, const Vector& x, const NoiseContext& ctx) const;

    /// Field that ignores the noise context.
    static RandomScalarField deterministic(std::function<double(double, const Vector&)> fn,
                                           std::function<Vector(double, const Vector&)> grad = {},
                                           std::function<Matrix(double, const Vector&)> hess = {});
};

/// Coefficients (Q, D_k, G) of d_t F = Q dt + D_k dw_k + ∫ G ν(dt, dγ).
struct DifferentialTriple {
    using ScalarFn = std::function<double(double, const Vector&, const NoiseContext&)>;
    using VectorFn = std::function<Vector(double, const Vector&, const NoiseContext&)>;
    using JumpFn = std::function<double(double, const Vector&, const Vector&, const NoiseContext&)>;
    /// (k, i) = ∂D_k/∂x_i
    using JacobianFn = std::function<Matrix(double, const Vector&, const NoiseContext&)>;

    ScalarFn drift;
    VectorFn diffusion;
    JumpFn jump;
    JacobianFn diffusion_jacobian;
    bool allow_fd = true;

    static DifferentialTriple zero() { return {}; }

    double Q(double t, const Vector& x, const NoiseContext& ctx) const;
    Vector D(double t, const Vector& x, const NoiseContext& ctx, std::size_t noise_dim) const;
    double G(double t, const Vector& x, const Vector& mark, const NoiseContext& ctx) const;
    Matrix D_jacobian(double t, const Vector& x, const NoiseContext& ctx, std::size_t noise_dim) const;
};

/// A jump inside one step, with its left-limit state and noise.
struct StepJump {
    double time = 0.0;
    Vector state_before;
    Vector mark;
    NoiseContext context_before;
};

struct StepNoise {
    double dt = 0.0;
    Vector dw;
    std::vector<StepJump> jumps;
};

/// The individual terms of one discrete increment; `total()` is their sum.
struct IncrementTerms {
    double own_drift = 0.0;     // Q dt
    double own_diffusion = 0.0; // D_k Δw_k
    double ito_drift = 0.0;     // [a·∇F + ½ b bᵀ : ∇²F + b_ik ∂D_k/∂x_i] dt
    double ito_diffusion = 0.0; // b_ik ∂F/∂x_i Δw_k
    double jump_shift = 0.0;    // Σ F(t, x⁻+g) − F(t, x⁻)
    double jump_own = 0.0;      // Σ G(t, x⁻+g, γ)

    double total() const noexcept
    {
        return own_drift + own_diffusion + ito_drift + ito_diffusion + jump_shift + jump_own;
    }
    double max_abs_term() const noexcept;
};

/// Discrete generalized Itô–Wentzell increment of F(t, x(t)) over one step,
/// coefficients frozen at the left endpoint (t, x) with noise context `ctx`.
IncrementTerms compose_increment(const RandomScalarField& F, const DifferentialTriple& triple,
                                 const CoefficientField& coeffs, double t, const Vector& x, const NoiseContext& ctx,
                                 const StepNoise& noise);

/// Noise of step i of `path`, marks resolved through `measure`.
StepNoise step_noise(const SamplePath& path, const MarkMeasure& measure, std::size_t i);

struct ResidualReport {
    double residual = 0.0;        // |F(T, x(T)) − F(0, x0) − Σ increments|
    double signed_residual = 0.0; // same without the absolute value
    double max_step_term = 0.0;   // largest |term| seen in any increment
    std::size_t steps = 0;
};

ResidualReport verify_along_path(const RandomScalarField& F, const DifferentialTriple& triple,
                                 const CoefficientField& coeffs, const MarkMeasure& measure, const SamplePath& path);

struct LadderRung {
    double dt = 0.0;
    std::size_t paths = 0;
    double mean_residual = 0.0;        // mean over paths of |residual|
    double mean_square_residual = 0.0; // mean over paths of residual²
    double max_residual = 0.0;
};

struct LadderReport {
    std::vector<LadderRung> rungs;
    double order = 0.0;             // fitted slope of log mean_residual vs log dt
    double mean_square_order = 0.0; // same for mean_square_residual
};

/// Least-squares slope of log(values) against log(dts); NaN if any value is
/// not positive.
double fit_order(std::span<const double> dts, std::span<const double> values);

LadderReport verify_ladder(const RandomScalarField& F, const DifferentialTriple& triple, const CoefficientField& coeffs,
                           const MarkMeasure& measure, const Vector& x0, double T, std::span<const double> dts,
                           std::size_t n_paths, std::uint64_t seed, const ExecutionPolicy& policy = {});

/// Columns dt, residual, mean_square_residual, order (local slope vs the
/// previous rung; empty on the first).
void write_ladder_csv(std::ostream& out, const LadderReport& report);

/// Agreement of analytic derivatives with central differences, worst
/// relative error over the probes.
double field_derivative_error(const RandomScalarField& F, std::span<const Vector> probes, const NoiseContext& ctx,
                              double t = 0.0);

/// Finite-difference continuity probe: second differences of Q and D_k at
/// steps h and h/2 must be finite and agree to `rel_tol`.
bool triple_is_smooth(const DifferentialTriple& triple, std::size_t noise_dim, std::span<const Vector> probes,
                      const NoiseContext& ctx, double t = 0.0, double rel_tol = 1e-3);

} // namespace gsde
