#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "gsde/coefficient_field.hpp"
#include "gsde/linalg.hpp"
#include "gsde/parallel.hpp"

namespace gsde {

/// Realized noise up to some time: what a random field may depend on.
struct NoiseContext {
    double t = 0.0;
    Vector w;                                // accumulated Wiener process w(t)
    std::size_t jump_count = 0;              // N(t), all marks
    std::vector<std::size_t> jumps_per_mark; // N_j(t)
};

struct JumpEvent {
    std::size_t node = 0; // grid node at which the jump lands
    double time = 0.0;
    std::size_t mark = 0; // atom index in the MarkMeasure
    Vector state_before;  // x(t-), after the diffusion sub-step
};

enum class PathStorage {
    full,     // every node, increments and accumulated noise
    terminal, // only x(0), x(T), w(T) and the jump list
};

/// One strong Euler–Maruyama realization with exact jump-time insertion.
///
/// Nodes: the uniform base grid k·dt plus every jump time. Increment i spans
/// [t_i, t_{i+1}]; at a jump node the jump is applied after the diffusion
/// sub-step, so x(t_{i+1}) = x(t_i) + a h + b Δw + g(t_{i+1}, x⁻, γ).
struct SamplePath {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    double base_dt = 0.0;
    std::size_t mark_count = 0;
    PathStorage storage = PathStorage::full;

    std::vector<double> times; // t_0 .. t_N
    Matrix states;             // n × (N+1)
    Matrix increments;         // m × N
    Matrix wiener;             // m × (N+1), w(t_i)
    std::vector<JumpEvent> jumps;
    std::vector<int> node_mark; // mark index landing at node i, or -1

    std::size_t nodes() const noexcept { return times.size(); }
    std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }
    double final_time() const { return times.back(); }
    Vector x0() const { return states.col(0); }
    Vector state(std::size_t i) const { return states.col(static_cast<Eigen::Index>(i)); }
    Vector final_state() const { return states.col(states.cols() - 1); }
    bool is_jump_node(std::size_t i) const { return node_mark[i] >= 0; }

    /// Noise realized by node i. With `before_jump`, a jump landing at node i
    /// is excluded (the left limit t_i⁻).
    NoiseContext context_at(std::size_t i, bool before_jump = false) const;
};

struct PathEnsemble {
    std::vector<SamplePath> paths;

    std::size_t size() const noexcept { return paths.size(); }
};

SamplePath simulate_path(const CoefficientField& coeffs, const MarkMeasure& measure, const Vector& x0, double T,
                         double dt, std::uint64_t seed, std::uint64_t path_index,
                         PathStorage storage = PathStorage::full);

/// Path i uses substream (seed, i). Errors carry the failing path index.
PathEnsemble simulate_ensemble(const CoefficientField& coeffs, const MarkMeasure& measure, const Vector& x0,
                               double T, double dt, std::uint64_t seed, std::size_t n_paths,
                               const ExecutionPolicy& policy = {}, PathStorage storage = PathStorage::full);

/// Solutions x(t; y) for several initial points y driven by one noise
/// realization, substream (seed, path_index). Path j starts at initial_points[j].
PathEnsemble simulate_flow(const CoefficientField& coeffs, const MarkMeasure& measure,
                           std::span<const Vector> initial_points, double T, double dt, std::uint64_t seed,
                           std::uint64_t path_index, const ExecutionPolicy& policy = {},
                           PathStorage storage = PathStorage::full);

/// Euler increment x(t_{i+1}) − x(t_i) recomputed from the stored noise.
Vector euler_increment(const CoefficientField& coeffs, const MarkMeasure& measure, const SamplePath& path,
                       std::size_t i);

struct TerminalMoments {
    Vector mean;
    Vector variance; // unbiased
};

TerminalMoments terminal_moments(const PathEnsemble& ensemble, const ExecutionPolicy& policy = {});

std::vector<std::size_t> jump_counts(const PathEnsemble& ensemble);

/// Columns t, x_1..x_n, jump_flag, mark_index (−1 without a jump).
void write_path_csv(std::ostream& out, const SamplePath& path);

} // namespace gsde
