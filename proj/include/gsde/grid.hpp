#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include "gsde/linalg.hpp"

namespace gsde {

/// Uniform axis with nodes lo + j·dx, j = 0..count−1.
struct Axis {
    double lo = 0.0;
    double dx = 1.0;
    std::size_t count = 0;

    double node(std::size_t j) const noexcept { return lo + static_cast<double>(j) * dx; }
    double hi() const noexcept { return node(count - 1); }

    /// Axis covering [lo, hi] with step dx (hi rounded to the nearest node).
    static Axis span(double lo, double hi, double dx);
};

/// Tensor grid in one or two dimensions. Node (i0, i1) lives at flat index
/// i0 + count0·i1; axis 0 varies fastest.
class GridSpec {
public:
    GridSpec() = default;
    explicit GridSpec(std::vector<Axis> axes);

    static GridSpec line(double lo, double hi, double dx) { return GridSpec({Axis::span(lo, hi, dx)}); }

    std::size_t dims() const noexcept { return axes_.size(); }
    const Axis& axis(std::size_t d) const { return axes_.at(d); }
    const std::vector<Axis>& axes() const noexcept { return axes_; }
    std::size_t size() const noexcept { return size_; }
    std::size_t stride(std::size_t d) const noexcept { return d == 0 ? 1 : axes_[0].count; }
    double cell_volume() const noexcept;

    std::array<std::size_t, 2> unflatten(std::size_t flat) const noexcept;
    Vector node(std::size_t flat) const;

    /// Exact spec equality up to 1e-12 relative on lo and dx.
    bool same_as(const GridSpec& other) const noexcept;

private:
    std::vector<Axis> axes_;
    std::size_t size_ = 0;
};

/// Nodal values of a density with quadrature mass Σ p_j · cell volume.
struct GridDensity {
    GridSpec spec;
    std::vector<double> values;

    GridDensity() = default;
    explicit GridDensity(GridSpec s) : spec(std::move(s)), values(spec.size(), 0.0) {}

    static GridDensity from_function(const GridSpec& spec, const std::function<double(const Vector&)>& fn);

    double mass() const;
    double max_value() const;
    /// ∫ f p dx by nodal quadrature.
    double integrate(const std::function<double(const Vector&)>& f) const;
    /// Multilinear interpolation; 0 outside the grid.
    double interpolate(const Vector& x) const;
    bool contains(const Vector& x) const;
    /// Rescales so that mass() == 1.
    GridDensity& normalize();
};

/// Gaussian with covariance sigma²·I sampled at the nodes, normalized to
/// discrete mass 1.
GridDensity gaussian_density(const GridSpec& spec, const Vector& mean, double sigma);

/// Compact bump ∝ (1 − |x − c|²/R²)³ inside the ball, normalized to
/// discrete mass 1. Its variance per axis is R²/9 in one dimension.
GridDensity bump_density(const GridSpec& spec, const Vector& center, double radius);

/// Unnormalized bump value, for closed-form comparisons.
double bump_shape(const Vector& x, const Vector& center, double radius);

/// Merges `factor` consecutive cells per axis; the new value is the merged
/// mass over the merged volume, placed at the mean of the merged nodes.
/// Counts must be divisible by `factor`.
GridDensity coarsen(const GridDensity& density, std::size_t factor);

/// Columns x (or x_1, x_2) and rho.
void write_density_csv(std::ostream& out, const GridDensity& density);

/// Columns t, x (or x_1, x_2), rho for a sequence of snapshots.
void write_density_trajectory_csv(std::ostream& out, const std::vector<double>& times,
                                  const std::vector<GridDensity>& snapshots);

/// Reads a CSV written by write_density_csv back into a density.
GridDensity read_density_csv(std::istream& in);

} // namespace gsde
