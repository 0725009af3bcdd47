#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gsde/coefficient_field.hpp"
#include "gsde/first_integral.hpp"
#include "gsde/grid.hpp"
#include "gsde/parallel.hpp"
#include "gsde/sample_path.hpp"

namespace gsde {

/// Flow Jacobian J(t) = det ∂x(t; x0)/∂x0 along one path.
struct JacobianPath {
    std::vector<double> times;
    std::vector<double> values;     // J(t_i), multiplicative accumulation
    std::vector<double> log_values; // additive accumulation of log J
    std::vector<double> drift_terms;  // K(t_i) for step i
    std::vector<double> jump_factors; // det(I + ∂g/∂x) at each jump, in order

    double final_value() const { return values.back(); }
    /// max_i |exp(log_values[i]) − values[i]| / values[i]
    double log_consistency() const;
};

/// Integrates the explicit solution of the Jacobian equation along `path`:
/// log J gains [K − ½ Σ_k (div b_k)²] h + Σ_k div b_k Δw_k per step and
/// log det(I + ∂g/∂x) at each jump, where
/// K = div a + ½ Σ_k [(tr ∂b_k)² − tr(∂b_k ∂b_k)] and (∂b_k)_ij = ∂b_ik/∂x_j.
JacobianPath evolve_jacobian(const CoefficientField& coeffs, const MarkMeasure& measure, const SamplePath& path);

struct DensityOptions {
    /// Keep a snapshot every k path nodes (the first and last are always kept);
    /// 0 keeps only those two.
    std::size_t snapshot_every = 0;
    /// Relative level above which density at the boundary band, or mass
    /// jumping out of the grid, raises SupportOverflow.
    double support_tol = 1e-8;
    bool check_support = true;
    std::optional<UniquenessDomain> domain;
};

/// One realization of the stochastic density ρ(t, x) on a grid.
struct DensityFieldPath {
    GridSpec spec;
    std::uint64_t seed = 0;       // driving path substream
    std::uint64_t path_index = 0;
    std::vector<std::size_t> snapshot_nodes;
    std::vector<double> snapshot_times;
    std::vector<GridDensity> snapshots;
    std::vector<double> snapshot_masses;
    double clipped_mass = 0.0;   // total mass removed by clipping negatives
    double min_pre_clip = 0.0;   // most negative value seen before clipping
    std::vector<double> jump_mass_changes; // mass after − mass before, per jump

    const GridDensity& final() const { return snapshots.back(); }
};

/// Explicit Euler–Maruyama for the density SPDE, driven by the increments and
/// jumps stored in `driving_path`.
DensityFieldPath evolve_density_field(const CoefficientField& coeffs, const MarkMeasure& measure,
                                      const SamplePath& driving_path, const GridDensity& rho0,
                                      const DensityOptions& options = {});

struct InvariantRow {
    double t = 0.0;
    double jacobian = 0.0;
    double rho_interp = 0.0;
    double product = 0.0;
    double rel_dev = 0.0;
};

struct InvariantReport {
    double rho0_at_x0 = 0.0;
    std::vector<InvariantRow> rows;
    double max_rel_dev = 0.0;
};

/// J(t)·ρ(t, x(t)) against ρ0(x0) at every snapshot node of `dens`.
InvariantReport check_density_invariant(const JacobianPath& jac, const DensityFieldPath& dens, const SamplePath& path,
                                        const GridDensity& rho0);

/// Columns t, J, rho_interp, product, rel_dev.
void write_invariant_csv(std::ostream& out, const InvariantReport& report);

struct TestFunction {
    std::string name;
    std::function<double(const Vector&)> f;
};

using TestFunctionSet = std::vector<TestFunction>;

/// 1, x_1, x_1², cos(x_1).
TestFunctionSet default_test_functions();

struct WeakCheckRow {
    std::string name;
    double grid_value = 0.0;   // ∫ f ρ(T) dx
    double flow_value = 0.0;   // Σ_j w_j f(x(T; y_j))
    double flow_stderr = 0.0;  // weighted spread / √(effective sample size)
    double abs_diff = 0.0;
};

struct WeakCheckReport {
    double mass_error = 0.0; // ∫ρ(T) − 1
    std::vector<WeakCheckRow> rows;
};

/// Weak form of the kernel-function property at the final snapshot. Path j
/// of `flow` starts at y_j and carries weight ∝ ρ0(y_j); all paths must share
/// the noise that drove `dens`.
WeakCheckReport check_normalization(const DensityFieldPath& dens, const TestFunctionSet& fs, const PathEnsemble& flow,
                                    const GridDensity& rho0);

/// Flow started from every grid node where ρ0 > 0, driven by the substream
/// (seed, path_index).
PathEnsemble density_flow(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& rho0,
                          double T, double dt, std::uint64_t seed, std::uint64_t path_index,
                          const ExecutionPolicy& policy = {});

} // namespace gsde
