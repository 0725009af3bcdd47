#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "gsde/coefficient_field.hpp"
#include "gsde/first_integral.hpp"
#include "gsde/grid.hpp"

namespace gsde::detail {

/// Multilinear interpolation weights of one point against the grid nodes.
struct InterpolationRow {
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
    int count = 0; // 0 when the point lies outside the grid

    double apply(const std::vector<double>& values) const noexcept
    {
        double sum = 0.0;
        for (int i = 0; i < count; ++i) sum += weight[static_cast<std::size_t>(i)] * values[index[static_cast<std::size_t>(i)]];
        return sum;
    }
};

InterpolationRow interpolation_row(const GridSpec& spec, const Vector& x);

/// Grid form of one jump atom, for either direction.
///
/// Forward (density): out_j = D̄_j ρ(x⁻¹(x_j)); `leaves[j]` marks nodes whose
/// image x_j + g falls outside the grid. Backward: out_j = p(x_j + g(x_j)).
struct JumpTransfer {
    std::vector<InterpolationRow> rows;
    std::vector<double> factor;
    std::vector<char> leaves;

    static JumpTransfer density(const GridSpec& spec, const CoefficientField& coeffs, double t, const Vector& mark,
                                const UniquenessDomain* domain);
    static JumpTransfer backward(const GridSpec& spec, const CoefficientField& coeffs, double t, const Vector& mark);

    void apply(const std::vector<double>& in, std::vector<double>& out) const;
    /// Σ ρ_j over nodes whose jump image leaves the grid.
    double escaping(const std::vector<double>& rho) const;
};

/// Caches JumpTransfer per atom; rebuilds every call unless autonomous.
class JumpCache {
public:
    JumpCache(const GridSpec& spec, const CoefficientField& coeffs, const MarkMeasure& measure, bool backward,
              std::optional<UniquenessDomain> domain);

    const JumpTransfer& at(double t, std::size_t atom);

private:
    const GridSpec& spec_;
    const CoefficientField& coeffs_;
    const MarkMeasure& measure_;
    bool backward_;
    std::optional<UniquenessDomain> domain_;
    std::vector<std::optional<JumpTransfer>> cache_;
};

/// Node values of a, b and B = b bᵀ; refreshed per time unless autonomous.
class NodeCoefficients {
public:
    NodeCoefficients(const GridSpec& spec, const CoefficientField& coeffs);

    void prepare(double t);

    std::size_t dims() const noexcept { return dims_; }
    std::size_t noise_dim() const noexcept { return m_; }
    double a(std::size_t d, std::size_t j) const noexcept { return a_[d][j]; }
    double b(std::size_t d, std::size_t k, std::size_t j) const noexcept { return b_[d * m_ + k][j]; }
    double B(std::size_t d, std::size_t e, std::size_t j) const noexcept { return B_[d * dims_ + e][j]; }

    /// Largest stable explicit step; StabilityBoundViolated if dt exceeds it.
    void check_stability(double dt, const GridSpec& spec) const;

private:
    const CoefficientField& coeffs_;
    const GridSpec& spec_;
    std::size_t dims_;
    std::size_t m_;
    bool ready_ = false;
    std::vector<std::vector<double>> a_;
    std::vector<std::vector<double>> b_;
    std::vector<std::vector<double>> B_;
};

/// out += dt·[−∂(ρ a) + ½∂²(ρ B)] − Σ_k ∂(ρ b_k) Δw_k in conservative flux
/// form, zero outside the box. `dw` may be null for the deterministic part.
void add_forward_increment(const GridSpec& spec, const NodeCoefficients& c, const std::vector<double>& rho, double dt,
                           const Vector* dw, std::vector<double>& out);

/// out += ds·[a·∂p + ½ B:∂²p], zero outside the box.
void add_backward_increment(const GridSpec& spec, const NodeCoefficients& c, const std::vector<double>& p, double ds,
                            std::vector<double>& out);

/// Sets negative entries to zero; returns the clipped amount (sum of |neg|)
/// and lowers `min_seen` to the smallest pre-clip value.
double clip_negative(std::vector<double>& values, double& min_seen);

/// Throws SupportOverflow if the outer band of nodes carries more than
/// `tol` relative to the peak.
void check_boundary_band(const GridSpec& spec, const std::vector<double>& values, double tol, double t);

} // namespace gsde::detail
