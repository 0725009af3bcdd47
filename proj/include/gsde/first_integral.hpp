#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gsde/coefficient_field.hpp"
#include "gsde/ito_wentzell.hpp"
#include "gsde/linalg.hpp"
#include "gsde/parallel.hpp"
#include "gsde/sample_path.hpp"

namespace gsde {

enum class JumpMode {
    state_independent,
    state_dependent,
};

/// Candidate stochastic first integral u(t, x; ω).
struct SFICandidate {
    RandomScalarField u;
    JumpMode mode = JumpMode::state_independent;
};

/// Finite-difference C^{1,2} probe of u at the given points.
bool candidate_is_smooth(const SFICandidate& candidate, std::span<const Vector> probes, const NoiseContext& ctx,
                         double t = 0.0, double rel_tol = 1e-3);

/// Box on which the jump map y ↦ y + g(t, y, γ) is assumed injective.
struct UniquenessDomain {
    Vector lo;
    Vector hi;
    std::size_t samples_per_axis = 5;
};

struct InverseJumpSolve {
    Vector y;                   // solution of y + g(t, y, γ) = x
    double forward_det = 1.0;   // Ā = det(I + ∂g/∂y) at y
    double inverse_det = 1.0;   // D̄ = det of the Jacobian of x ↦ y
    std::size_t iterations = 0; // Newton steps taken
    double residual = 0.0;      // |y + g(t, y, γ) − x|∞
};

/// Largest ‖∂g/∂y‖∞ over a tensor grid of the box.
double contraction_bound(const CoefficientField& coeffs, double t, const Vector& mark, const UniquenessDomain& domain);

/// Solves y + g(t, y, γ) = x by Newton iteration from y₀ = x − g(t, x, γ).
///
/// Stops once the residual drops below 1e-12·max(1, |x|∞); gives up after 50
/// steps with InverseMapDiverged. Every iterate must satisfy ‖∂g/∂y‖∞ < 1,
/// as must the optional `domain` samples, else UniquenessDomainViolated.
InverseJumpSolve inverse_jump_map(const CoefficientField& coeffs, double t, const Vector& x, const Vector& mark,
                                  const UniquenessDomain* domain = nullptr);

/// D̄ computed by differentiating the inverse map numerically, independent
/// of the determinant route used by inverse_jump_map.
double inverse_det_fd(const CoefficientField& coeffs, double t, const Vector& x, const Vector& mark);

/// Triple (Q, D_k, G) that makes u a stochastic first integral of `coeffs`.
///
/// Q = −a·∇u + ½ bbᵀ:∇²u + b_ik (∂b_jk/∂x_i) ∂u/∂x_j, D_k = −b_ik ∂u/∂x_i and
/// G(t, x, γ) = u(t, x − g(t, x⁻¹(t; x; γ), γ)) − u(t, x).
DifferentialTriple sfi_triple(const SFICandidate& candidate, const CoefficientField& coeffs,
                              std::optional<UniquenessDomain> domain = std::nullopt);

struct ConservationRow {
    std::size_t path_index = 0;
    double max_residual = 0.0;       // max over nodes of |u(t, x(t)) − u(0, x0)|
    double final_residual = 0.0;     // same at T
    double increment_residual = 0.0; // max over nodes of |Σ Itô-Wentzell increments of u|
};

struct ConservationReport {
    std::vector<ConservationRow> rows;
    double max_residual = 0.0;
    double mean_residual = 0.0;
    double max_increment_residual = 0.0;
};

ConservationReport check_conservation(const SFICandidate& candidate, const DifferentialTriple& triple,
                                      const CoefficientField& coeffs, const MarkMeasure& measure,
                                      const PathEnsemble& ensemble, const ExecutionPolicy& policy = {});

struct ConservationRung {
    double dt = 0.0;
    double max_residual = 0.0;
    double mean_residual = 0.0;
};

struct ConservationLadder {
    std::vector<ConservationRung> rungs;
    double order = 0.0; // fitted slope of log mean_residual vs log dt; NaN if a rung is exact
};

ConservationLadder conservation_ladder(const SFICandidate& candidate, const DifferentialTriple& triple,
                                       const CoefficientField& coeffs, const MarkMeasure& measure, const Vector& x0,
                                       double T, std::span<const double> dts, std::size_t n_paths, std::uint64_t seed,
                                       const ExecutionPolicy& policy = {});

/// Columns path_index, max_residual, final_residual.
void write_conservation_csv(std::ostream& out, const ConservationReport& report);

// Known first integrals of the built-in models.

/// u = x_1 − a t − b w_1(t) for dx_1 = a dt + b dw_1.
SFICandidate linear_sfi(double a, double b);

/// u = x_1 − h N(t) for dx = h dν.
SFICandidate jump_count_sfi(double h);

/// u = x (1 + c)^{−N(t)} for dx = c x dν (one mark).
SFICandidate multiplicative_jump_sfi(double c);

/// u = x exp(−(μ − σ²/2) t − σ w(t)) for dx = μ x dt + σ x dw.
SFICandidate gbm_sfi(double mu, double sigma);

} // namespace gsde
