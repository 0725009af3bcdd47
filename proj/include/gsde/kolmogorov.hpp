#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gsde/coefficient_field.hpp"
#include "gsde/first_integral.hpp"
#include "gsde/grid.hpp"
#include "gsde/parallel.hpp"
#include "gsde/sample_path.hpp"

namespace gsde {

struct SolverOptions {
    /// Keep every k-th step (first and last always kept); 0 keeps only those.
    std::size_t snapshot_every = 0;
    double support_tol = 1e-8;
    bool check_support = true;
    std::optional<UniquenessDomain> domain;
};

struct DensityTrajectory {
    std::vector<double> times;
    std::vector<GridDensity> snapshots;
    std::vector<double> masses;
    double clipped_mass = 0.0;
    double min_pre_clip = 0.0;

    const GridDensity& final() const { return snapshots.back(); }
};

/// Explicit solver for the forward equation of the mean density,
/// ∂p/∂t = −∂(p a_i)/∂x_i + ½ ∂²(p B_ij)/∂x_i∂x_j + Σ_j λ_j [p(x⁻¹) D̄ − p],
/// from time t0 to t0 + T. The last step is shortened to land on t0 + T.
DensityTrajectory solve_forward(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& p0,
                                double T, double dt, const SolverOptions& options = {}, double t0 = 0.0);

/// Explicit solver for the backward equation in (s, y), from the terminal
/// data at time t down to s_final. Snapshot times decrease.
DensityTrajectory solve_backward(const CoefficientField& coeffs, const MarkMeasure& measure,
                                 const GridDensity& terminal, double t, double s_final, double ds,
                                 const SolverOptions& options = {});

/// p(t; x / s; y) for a set of x nodes (rows) over the y grid (columns).
struct TransitionDensityGrid {
    double s = 0.0;
    double t = 0.0;
    GridSpec spec;
    std::vector<std::size_t> x_nodes; // flat indices into spec
    Matrix values;                    // x_nodes.size() × spec.size()
};

/// Backward solves from a Gaussian terminal of width `mollifier` centred at
/// each requested node (2Δx when `mollifier` is 0).
TransitionDensityGrid transition_density(const CoefficientField& coeffs, const MarkMeasure& measure,
                                         const GridSpec& spec, std::span<const std::size_t> x_nodes, double s,
                                         double t, double ds, const ExecutionPolicy& policy = {},
                                         double mollifier = 0.0);

struct DualityReport {
    std::vector<double> x;
    std::vector<double> composed; // ∫ p(t; x / s; y) p(s; y) dy
    std::vector<double> direct;   // p(t; x) from solve_forward
    double l1 = 0.0;              // Σ |composed − direct| times the x spacing
    double linf = 0.0;
};

/// Chapman-type consistency of forward and backward solutions on every
/// `stride`-th node of a one-dimensional grid.
DualityReport check_duality(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& p0, double s,
                            double t, double dt, std::size_t stride, const ExecutionPolicy& policy = {});

struct McDensity {
    GridDensity density;
    double overflow_mass = 0.0; // fraction of samples outside the grid
    std::size_t overflow_count = 0;
    std::size_t samples = 0;
};

/// Nearest-node histogram of final states, normalized by the total sample
/// count (so in-grid mass + overflow mass = 1).
McDensity mc_density(const PathEnsemble& ensemble, const GridSpec& spec);
McDensity mc_density(std::span<const Vector> points, const GridSpec& spec);

struct DensityMetrics {
    double l1 = 0.0;
    double linf = 0.0;
    double mass_err = 0.0; // mass(p1) − mass(p2)
};

/// GridMismatch unless both densities live on the same grid.
DensityMetrics compare_densities(const GridDensity& p1, const GridDensity& p2);

/// JSON object with keys l1, linf, mass_err, runtime_s.
void write_metrics_json(std::ostream& out, const DensityMetrics& metrics, double runtime_s);

/// Average of final SPDE densities over `n_realizations` independent driving
/// paths (substreams (seed, r)). Summed in realization order.
GridDensity mean_field_average(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& rho0,
                               double T, double dt, std::size_t n_realizations, std::uint64_t seed,
                               const ExecutionPolicy& policy = {});

/// Mass in the cells nearest to each lattice point x0 + k·h, k = 0..count−1.
std::vector<double> lattice_masses(const GridDensity& density, double x0, double h, std::size_t count);

} // namespace gsde
