#include "stencil.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gsde/error.hpp"

namespace gsde::detail {

InterpolationRow interpolation_row(const GridSpec& spec, const Vector& x)
{
    InterpolationRow row;
    std::array<std::size_t, 2> base{0, 0};
    std::array<double, 2> frac{0.0, 0.0};
    for (std::size_t d = 0; d < spec.dims(); ++d) {
        const auto& a = spec.axis(d);
        const double s = (x[static_cast<Eigen::Index>(d)] - a.lo) / a.dx;
        if (!(s >= 0.0 && s <= static_cast<double>(a.count - 1))) return row;
        const auto i = std::min(static_cast<std::size_t>(s), a.count - 2);
        base[d] = i;
        frac[d] = s - static_cast<double>(i);
    }
    if (spec.dims() == 1) {
        row.count = 2;
        row.index = {base[0], base[0] + 1, 0, 0};
        row.weight = {1.0 - frac[0], frac[0], 0.0, 0.0};
        return row;
    }
    const std::size_t n0 = spec.axis(0).count;
    const std::size_t j = base[0] + n0 * base[1];
    row.count = 4;
    row.index = {j, j + 1, j + n0, j + n0 + 1};
    row.weight = {(1.0 - frac[0]) * (1.0 - frac[1]), frac[0] * (1.0 - frac[1]), (1.0 - frac[0]) * frac[1],
                  frac[0] * frac[1]};
    return row;
}

JumpTransfer JumpTransfer::density(const GridSpec& spec, const CoefficientField& coeffs, double t, const Vector& mark,
                                   const UniquenessDomain* domain)
{
    JumpTransfer out;
    out.rows.resize(spec.size());
    out.factor.resize(spec.size());
    out.leaves.resize(spec.size());
    GridDensity probe(spec);
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const Vector x = spec.node(j);
        const auto inv = inverse_jump_map(coeffs, t, x, mark, domain);
        out.rows[j] = interpolation_row(spec, inv.y);
        out.factor[j] = inv.inverse_det;
        out.leaves[j] = probe.contains(x + coeffs.jump(t, x, mark)) ? 0 : 1;
    }
    return out;
}

JumpTransfer JumpTransfer::backward(const GridSpec& spec, const CoefficientField& coeffs, double t, const Vector& mark)
{
    JumpTransfer out;
    out.rows.resize(spec.size());
    out.factor.assign(spec.size(), 1.0);
    out.leaves.assign(spec.size(), 0);
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const Vector y = spec.node(j);
        out.rows[j] = interpolation_row(spec, y + coeffs.jump(t, y, mark));
    }
    return out;
}

void JumpTransfer::apply(const std::vector<double>& in, std::vector<double>& out) const
{
    out.resize(in.size());
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = factor[j] * rows[j].apply(in);
}

double JumpTransfer::escaping(const std::vector<double>& rho) const
{
    double sum = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        if (leaves[j]) sum += rho[j];
    }
    return sum;
}

JumpCache::JumpCache(const GridSpec& spec, const CoefficientField& coeffs, const MarkMeasure& measure, bool backward,
                     std::optional<UniquenessDomain> domain)
    : spec_(spec), coeffs_(coeffs), measure_(measure), backward_(backward), domain_(std::move(domain)),
      cache_(measure.size())
{
}

const JumpTransfer& JumpCache::at(double t, std::size_t atom)
{
    auto& slot = cache_.at(atom);
    if (!slot || !coeffs_.autonomous()) {
        const Vector& mark = measure_.atoms()[atom].mark;
        slot = backward_ ? JumpTransfer::backward(spec_, coeffs_, t, mark)
                         : JumpTransfer::density(spec_, coeffs_, t, mark, domain_ ? &*domain_ : nullptr);
    }
    return *slot;
}

NodeCoefficients::NodeCoefficients(const GridSpec& spec, const CoefficientField& coeffs)
    : coeffs_(coeffs), spec_(spec), dims_(spec.dims()), m_(coeffs.noise_dim())
{
    if (coeffs.state_dim() != spec.dims()) {
        throw GridMismatch("grid has " + std::to_string(spec.dims()) + " dimensions, state has "
                           + std::to_string(coeffs.state_dim()));
    }
    a_.assign(dims_, std::vector<double>(spec.size(), 0.0));
    b_.assign(dims_ * m_, std::vector<double>(spec.size(), 0.0));
    B_.assign(dims_ * dims_, std::vector<double>(spec.size(), 0.0));
}

void NodeCoefficients::prepare(double t)
{
    if (ready_ && coeffs_.autonomous()) return;
    for (std::size_t j = 0; j < spec_.size(); ++j) {
        const Vector x = spec_.node(j);
        const Vector a = coeffs_.drift(t, x);
        const Matrix b = coeffs_.diffusion(t, x);
        if (!a.allFinite() || !b.allFinite()) {
            throw NumericalBlowup("non-finite coefficient on the grid at x = " + format_vector(x), t, x);
        }
        const Matrix B = b * b.transpose();
        for (std::size_t d = 0; d < dims_; ++d) {
            const auto dd = static_cast<Eigen::Index>(d);
            a_[d][j] = a[dd];
            for (std::size_t k = 0; k < m_; ++k) b_[d * m_ + k][j] = b(dd, static_cast<Eigen::Index>(k));
            for (std::size_t e = 0; e < dims_; ++e) B_[d * dims_ + e][j] = B(dd, static_cast<Eigen::Index>(e));
        }
    }
    ready_ = true;
}

void NodeCoefficients::check_stability(double dt, const GridSpec& spec) const
{
    double diffusive = 0.0;
    for (std::size_t d = 0; d < dims_; ++d) {
        const double h = spec.axis(d).dx;
        const auto& Bdd = B_[d * dims_ + d];
        const auto& ad = a_[d];
        const double max_B = *std::max_element(Bdd.begin(), Bdd.end());
        double max_a = 0.0;
        for (const double v : ad) max_a = std::max(max_a, std::abs(v));
        diffusive += 2.0 * max_B / (h * h);
        if (dt * 2.0 * max_a > h) {
            throw StabilityBoundViolated("dt = " + std::to_string(dt) + " exceeds dx/(2 max|a|) = "
                                         + std::to_string(h / (2.0 * max_a)) + " on axis " + std::to_string(d));
        }
    }
    if (dt * diffusive > 1.0) {
        throw StabilityBoundViolated("dt = " + std::to_string(dt) + " exceeds dx^2/(2 max b^2) = "
                                     + std::to_string(1.0 / diffusive));
    }
}

namespace {

/// Calls fn(start) for the first node of every grid line along axis d.
template <class Fn>
void for_each_line(const GridSpec& spec, std::size_t d, Fn&& fn)
{
    if (spec.dims() == 1) {
        fn(std::size_t{0});
        return;
    }
    const std::size_t n0 = spec.axis(0).count;
    const std::size_t n1 = spec.axis(1).count;
    if (d == 0) {
        for (std::size_t i1 = 0; i1 < n1; ++i1) fn(i1 * n0);
    } else {
        for (std::size_t i0 = 0; i0 < n0; ++i0) fn(i0);
    }
}

} // namespace

void add_forward_increment(const GridSpec& spec, const NodeCoefficients& c, const std::vector<double>& rho, double dt,
                           const Vector* dw, std::vector<double>& out)
{
    const std::size_t dims = spec.dims();
    const std::size_t m = dw ? c.noise_dim() : 0;
    for (std::size_t d = 0; d < dims; ++d) {
        const std::size_t s = spec.stride(d);
        const std::size_t count = spec.axis(d).count;
        const double h = spec.axis(d).dx;
        const double inv_h = 1.0 / h;
        for_each_line(spec, d, [&](std::size_t start) {
            // Face between positions p and p+1, p = −1..count−1; ghosts carry ρ = 0.
            for (std::size_t q = 0; q <= count; ++q) {
                const bool has_left = q > 0;
                const bool has_right = q < count;
                const std::size_t L = has_left ? start + (q - 1) * s : 0;
                const std::size_t R = has_right ? start + q * s : 0;
                const double rL = has_left ? rho[L] : 0.0;
                const double rR = has_right ? rho[R] : 0.0;
                if (rL == 0.0 && rR == 0.0) continue;
                const double aL = has_left ? c.a(d, L) : c.a(d, R);
                const double aR = has_right ? c.a(d, R) : aL;
                const double BL = has_left ? c.B(d, d, L) : c.B(d, d, R);
                const double BR = has_right ? c.B(d, d, R) : BL;
                const double a_face = 0.5 * (aL + aR);
                const double B_face = 0.5 * (BL + BR);
                double advective;
                if (std::abs(a_face) * h <= B_face) {
                    advective = 0.5 * (rL * aL + rR * aR);
                } else {
                    advective = a_face > 0.0 ? rL * aL : rR * aR;
                }
                const double diffusive = 0.5 * (rR * BR - rL * BL) * inv_h;
                double flux = dt * (advective - diffusive);
                for (std::size_t k = 0; k < m; ++k) {
                    const double bL = has_left ? c.b(d, k, L) : 0.0;
                    const double bR = has_right ? c.b(d, k, R) : 0.0;
                    flux += 0.5 * (rL * bL + rR * bR) * (*dw)[static_cast<Eigen::Index>(k)];
                }
                if (has_left) out[L] -= flux * inv_h;
                if (has_right) out[R] += flux * inv_h;
            }
        });
    }

    if (dims == 2) {
        // ∂²(ρ B_12)/∂x_1∂x_2 appears twice in ½ Σ_ij, hence weight 1.
        const std::size_t n0 = spec.axis(0).count;
        const std::size_t n1 = spec.axis(1).count;
        const double scale = dt / (4.0 * spec.axis(0).dx * spec.axis(1).dx);
        auto u = [&](std::size_t i0, std::size_t i1) {
            const std::size_t j = i0 + n0 * i1;
            return rho[j] * c.B(0, 1, j);
        };
        for (std::size_t i1 = 0; i1 < n1; ++i1) {
            for (std::size_t i0 = 0; i0 < n0; ++i0) {
                const std::size_t j = i0 + n0 * i1;
                if (c.B(0, 1, j) == 0.0 || rho[j] == 0.0) continue;
                // Scatter node j's contribution to its four diagonal neighbours.
                const double v = u(i0, i1) * scale;
                if (i0 + 1 < n0 && i1 + 1 < n1) out[j + 1 + n0] += v;
                if (i0 > 0 && i1 > 0) out[j - 1 - n0] += v;
                if (i0 + 1 < n0 && i1 > 0) out[j + 1 - n0] -= v;
                if (i0 > 0 && i1 + 1 < n1) out[j - 1 + n0] -= v;
            }
        }
    }
}

void add_backward_increment(const GridSpec& spec, const NodeCoefficients& c, const std::vector<double>& p, double ds,
                            std::vector<double>& out)
{
    const std::size_t dims = spec.dims();
    for (std::size_t d = 0; d < dims; ++d) {
        const std::size_t s = spec.stride(d);
        const std::size_t count = spec.axis(d).count;
        const double h = spec.axis(d).dx;
        const double inv_h = 1.0 / h;
        const double inv_h2 = inv_h * inv_h;
        for_each_line(spec, d, [&](std::size_t start) {
            for (std::size_t q = 0; q < count; ++q) {
                const std::size_t j = start + q * s;
                const double pm = q > 0 ? p[j - s] : 0.0;
                const double pp = q + 1 < count ? p[j + s] : 0.0;
                const double p0 = p[j];
                const double a = c.a(d, j);
                const double B = c.B(d, d, j);
                double grad;
                if (std::abs(a) * h <= B) {
                    grad = 0.5 * (pp - pm) * inv_h;
                } else {
                    grad = a > 0.0 ? (pp - p0) * inv_h : (p0 - pm) * inv_h;
                }
                out[j] += ds * (a * grad + 0.5 * B * (pp - 2.0 * p0 + pm) * inv_h2);
            }
        });
    }
    if (dims == 2) {
        const std::size_t n0 = spec.axis(0).count;
        const std::size_t n1 = spec.axis(1).count;
        const double scale = ds / (4.0 * spec.axis(0).dx * spec.axis(1).dx);
        auto at = [&](std::size_t i0, std::size_t i1, int o0, int o1) {
            const auto k0 = static_cast<std::ptrdiff_t>(i0) + o0;
            const auto k1 = static_cast<std::ptrdiff_t>(i1) + o1;
            if (k0 < 0 || k1 < 0 || k0 >= static_cast<std::ptrdiff_t>(n0) || k1 >= static_cast<std::ptrdiff_t>(n1)) {
                return 0.0;
            }
            return p[static_cast<std::size_t>(k0) + n0 * static_cast<std::size_t>(k1)];
        };
        for (std::size_t i1 = 0; i1 < n1; ++i1) {
            for (std::size_t i0 = 0; i0 < n0; ++i0) {
                const std::size_t j = i0 + n0 * i1;
                const double B01 = c.B(0, 1, j);
                if (B01 == 0.0) continue;
                out[j] += scale * B01
                          * (at(i0, i1, 1, 1) - at(i0, i1, 1, -1) - at(i0, i1, -1, 1) + at(i0, i1, -1, -1));
            }
        }
    }
}

double clip_negative(std::vector<double>& values, double& min_seen)
{
    double clipped = 0.0;
    for (auto& v : values) {
        if (v < 0.0) {
            min_seen = std::min(min_seen, v);
            clipped -= v;
            v = 0.0;
        }
    }
    return clipped;
}

void check_boundary_band(const GridSpec& spec, const std::vector<double>& values, double tol, double t)
{
    constexpr std::size_t kBand = 2;
    double peak = 0.0;
    for (const double v : values) peak = std::max(peak, v);
    if (peak <= 0.0) return;
    double edge = 0.0;
    const std::size_t n0 = spec.axis(0).count;
    const std::size_t n1 = spec.dims() == 2 ? spec.axis(1).count : 1;
    for (std::size_t i1 = 0; i1 < n1; ++i1) {
        const bool edge_row = spec.dims() == 2 && (i1 < kBand || i1 + kBand >= n1);
        if (edge_row) {
            for (std::size_t i0 = 0; i0 < n0; ++i0) edge = std::max(edge, values[i0 + n0 * i1]);
            continue;
        }
        for (std::size_t i = 0; i < kBand; ++i) {
            edge = std::max({edge, values[i + n0 * i1], values[n0 - 1 - i + n0 * i1]});
        }
    }
    if (edge > tol * peak) {
        throw SupportOverflow("density reaches the grid boundary at t = " + std::to_string(t) + " (edge/peak = "
                              + std::to_string(edge / peak) + ")");
    }
}

} // namespace gsde::detail
