#include "gsde/first_integral.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "gsde/csv.hpp"
#include "gsde/error.hpp"

namespace gsde {

namespace {

constexpr int kMaxNewton = 50;
constexpr double kNewtonTol = 1e-12;

Matrix jump_jacobian_at(const CoefficientField& coeffs, double t, const Vector& y, const Vector& mark)
{
    const auto n = static_cast<Eigen::Index>(coeffs.state_dim());
    if (!coeffs.has_jump() || !coeffs.jump_depends_on_state()) return Matrix::Zero(n, n);
    return coeffs.jump_jacobian(t, y, mark);
}

double inf_norm(const Matrix& m) { return m.rows() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff(); }

void require_contraction(const Matrix& jac, const Vector& y)
{
    const double kappa = inf_norm(jac);
    if (!(kappa < 1.0)) {
        throw UniquenessDomainViolated("jump map is not a contraction at y = " + format_vector(y) + " (|dg/dy| = "
                                           + std::to_string(kappa) + ")",
                                       kappa);
    }
}

} // namespace

bool candidate_is_smooth(const SFICandidate& candidate, std::span<const Vector> probes, const NoiseContext& ctx,
                         double t, double rel_tol)
{
    DifferentialTriple probe;
    probe.drift = candidate.u.value;
    return triple_is_smooth(probe, 0, probes, ctx, t, rel_tol);
}

double contraction_bound(const CoefficientField& coeffs, double t, const Vector& mark, const UniquenessDomain& domain)
{
    const auto n = static_cast<std::size_t>(domain.lo.size());
    if (domain.hi.size() != domain.lo.size() || n != coeffs.state_dim()) {
        throw InvalidArgument("uniqueness domain dimension does not match the state");
    }
    const std::size_t per_axis = std::max<std::size_t>(domain.samples_per_axis, 2);
    std::size_t total = 1;
    for (std::size_t d = 0; d < n; ++d) total *= per_axis;
    double kappa = 0.0;
    Vector y(static_cast<Eigen::Index>(n));
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rest = flat;
        for (std::size_t d = 0; d < n; ++d) {
            const auto i = static_cast<Eigen::Index>(d);
            const double frac = static_cast<double>(rest % per_axis) / static_cast<double>(per_axis - 1);
            y[i] = domain.lo[i] + frac * (domain.hi[i] - domain.lo[i]);
            rest /= per_axis;
        }
        kappa = std::max(kappa, inf_norm(jump_jacobian_at(coeffs, t, y, mark)));
    }
    return kappa;
}

InverseJumpSolve inverse_jump_map(const CoefficientField& coeffs, double t, const Vector& x, const Vector& mark,
                                  const UniquenessDomain* domain)
{
    if (static_cast<std::size_t>(x.size()) != coeffs.state_dim()) throw InvalidArgument("state dimension mismatch");
    if (domain) {
        const double kappa = contraction_bound(coeffs, t, mark, *domain);
        if (!(kappa < 1.0)) {
            throw UniquenessDomainViolated("contraction bound " + std::to_string(kappa) + " >= 1 on the declared box",
                                           kappa);
        }
    }

    const auto n = x.size();
    const Matrix identity = Matrix::Identity(n, n);
    const double tol = kNewtonTol * std::max(1.0, x.cwiseAbs().maxCoeff());
    InverseJumpSolve out;
    out.y = x - coeffs.jump(t, x, mark);
    Vector r = out.y + coeffs.jump(t, out.y, mark) - x;
    out.residual = r.cwiseAbs().maxCoeff();
    Matrix jac = jump_jacobian_at(coeffs, t, out.y, mark);
    require_contraction(jac, out.y);
    while (!(out.residual < tol)) {
        if (out.iterations == kMaxNewton || !std::isfinite(out.residual)) {
            throw InverseMapDiverged("Newton solve for the inverse jump map did not converge (residual "
                                         + std::to_string(out.residual) + ")",
                                     out.y);
        }
        out.y -= (identity + jac).partialPivLu().solve(r);
        ++out.iterations;
        r = out.y + coeffs.jump(t, out.y, mark) - x;
        out.residual = r.cwiseAbs().maxCoeff();
        jac = jump_jacobian_at(coeffs, t, out.y, mark);
        require_contraction(jac, out.y);
    }

    const Matrix forward = identity + jac;
    out.forward_det = forward.determinant();
    out.inverse_det = forward.inverse().determinant();
    return out;
}

double inverse_det_fd(const CoefficientField& coeffs, double t, const Vector& x, const Vector& mark)
{
    const auto n = x.size();
    Matrix jac(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = fd_step(x[j]);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        jac.col(j) = (inverse_jump_map(coeffs, t, xp, mark).y - inverse_jump_map(coeffs, t, xm, mark).y)
                     / (xp[j] - xm[j]);
    }
    return jac.determinant();
}

DifferentialTriple sfi_triple(const SFICandidate& candidate, const CoefficientField& coeffs,
                              std::optional<UniquenessDomain> domain)
{
    const RandomScalarField u = candidate.u;
    const std::size_t m = coeffs.noise_dim();
    DifferentialTriple triple;
    triple.allow_fd = u.allow_fd;

    triple.drift = [u, coeffs, m](double t, const Vector& x, const NoiseContext& ctx) {
        const Vector grad = u.gradient_at(t, x, ctx);
        double q = -coeffs.drift(t, x).dot(grad);
        if (m == 0 || !coeffs.has_diffusion()) return q;
        const Matrix b = coeffs.diffusion(t, x);
        const Matrix hess = u.hessian_at(t, x, ctx);
        q += 0.5 * (b * b.transpose()).cwiseProduct(hess).sum();
        // (dbk)(j, i) = ∂b_jk/∂x_i
        const auto db = coeffs.diffusion_jacobian(t, x);
        for (std::size_t k = 0; k < m; ++k) {
            q += b.col(static_cast<Eigen::Index>(k)).dot(db[k].transpose() * grad);
        }
        return q;
    };

    if (m > 0 && coeffs.has_diffusion()) {
        triple.diffusion = [u, coeffs](double t, const Vector& x, const NoiseContext& ctx) -> Vector {
            return -(coeffs.diffusion(t, x).transpose() * u.gradient_at(t, x, ctx));
        };
        if (u.hessian || u.allow_fd) {
            triple.diffusion_jacobian = [u, coeffs, m](double t, const Vector& x, const NoiseContext& ctx) {
                const Vector grad = u.gradient_at(t, x, ctx);
                const Matrix hess = u.hessian_at(t, x, ctx);
                const Matrix b = coeffs.diffusion(t, x);
                const auto db = coeffs.diffusion_jacobian(t, x);
                Matrix out(static_cast<Eigen::Index>(m), x.size());
                for (std::size_t k = 0; k < m; ++k) {
                    const auto kk = static_cast<Eigen::Index>(k);
                    out.row(kk) = -(db[k].transpose() * grad + hess * b.col(kk)).transpose();
                }
                return out;
            };
        }
    }

    if (coeffs.has_jump()) {
        if (candidate.mode == JumpMode::state_independent || !coeffs.jump_depends_on_state()) {
            triple.jump = [u, coeffs](double t, const Vector& x, const Vector& mark, const NoiseContext& ctx) {
                return u(t, x - coeffs.jump(t, x, mark), ctx) - u(t, x, ctx);
            };
        } else {
            triple.jump = [u, coeffs, domain](double t, const Vector& x, const Vector& mark, const NoiseContext& ctx) {
                const auto inv = inverse_jump_map(coeffs, t, x, mark, domain ? &*domain : nullptr);
                return u(t, x - coeffs.jump(t, inv.y, mark), ctx) - u(t, x, ctx);
            };
        }
    }
    return triple;
}

ConservationReport check_conservation(const SFICandidate& candidate, const DifferentialTriple& triple,
                                      const CoefficientField& coeffs, const MarkMeasure& measure,
                                      const PathEnsemble& ensemble, const ExecutionPolicy& policy)
{
    if (ensemble.paths.empty()) throw InvalidArgument("empty ensemble");
    ConservationReport report;
    report.rows.resize(ensemble.size());
    const RandomScalarField& u = candidate.u;
    parallel_for(ensemble.size(), policy, [&](std::size_t p) {
        const SamplePath& path = ensemble.paths[p];
        ConservationRow row;
        row.path_index = static_cast<std::size_t>(path.path_index);
        try {
            NoiseContext ctx = path.context_at(0);
            const double u0 = u(path.times[0], path.x0(), ctx);
            double accumulated = 0.0;
            for (std::size_t i = 0; i + 1 < path.nodes(); ++i) {
                const StepNoise noise = step_noise(path, measure, i);
                accumulated += compose_increment(u, triple, coeffs, path.times[i], path.state(i), ctx, noise).total();
                row.increment_residual = std::max(row.increment_residual, std::abs(accumulated));
                // Advance the context by one node.
                ctx.t = path.times[i + 1];
                ctx.w = path.wiener.col(static_cast<Eigen::Index>(i + 1));
                if (path.node_mark[i + 1] >= 0) {
                    ++ctx.jump_count;
                    ++ctx.jumps_per_mark[static_cast<std::size_t>(path.node_mark[i + 1])];
                }
                const double dev = std::abs(u(ctx.t, path.state(i + 1), ctx) - u0);
                row.max_residual = std::max(row.max_residual, dev);
                row.final_residual = dev;
            }
        } catch (Error& e) {
            e.annotate_path(p);
            throw;
        }
        report.rows[p] = row;
    });
    for (const auto& row : report.rows) {
        report.max_residual = std::max(report.max_residual, row.max_residual);
        report.max_increment_residual = std::max(report.max_increment_residual, row.increment_residual);
        report.mean_residual += row.max_residual;
    }
    report.mean_residual /= static_cast<double>(report.rows.size());
    return report;
}

ConservationLadder conservation_ladder(const SFICandidate& candidate, const DifferentialTriple& triple,
                                       const CoefficientField& coeffs, const MarkMeasure& measure, const Vector& x0,
                                       double T, std::span<const double> dts, std::size_t n_paths, std::uint64_t seed,
                                       const ExecutionPolicy& policy)
{
    ConservationLadder ladder;
    std::vector<double> rung_dts, means;
    for (const double dt : dts) {
        const auto ensemble = simulate_ensemble(coeffs, measure, x0, T, dt, seed, n_paths, policy);
        const auto report = check_conservation(candidate, triple, coeffs, measure, ensemble, policy);
        ladder.rungs.push_back({dt, report.max_residual, report.mean_residual});
        rung_dts.push_back(dt);
        means.push_back(report.mean_residual);
    }
    if (ladder.rungs.size() >= 2) ladder.order = fit_order(rung_dts, means);
    return ladder;
}

void write_conservation_csv(std::ostream& out, const ConservationReport& report)
{
    CsvWriter csv(out);
    csv.header({"path_index", "max_residual", "final_residual"});
    for (const auto& row : report.rows) {
        csv.field(static_cast<std::uint64_t>(row.path_index)).field(row.max_residual).field(row.final_residual);
        csv.end_row();
    }
}

SFICandidate linear_sfi(double a, double b)
{
    SFICandidate c;
    c.u.value = [a, b](double t, const Vector& x, const NoiseContext& ctx) {
        const double w = ctx.w.size() > 0 ? ctx.w[0] : 0.0;
        return x[0] - a * t - b * w;
    };
    c.u.gradient = [](double, const Vector& x, const NoiseContext&) {
        Vector g = Vector::Zero(x.size());
        g[0] = 1.0;
        return g;
    };
    c.u.hessian = [](double, const Vector& x, const NoiseContext&) { return Matrix::Zero(x.size(), x.size()); };
    return c;
}

SFICandidate jump_count_sfi(double h)
{
    SFICandidate c;
    c.u.value = [h](double, const Vector& x, const NoiseContext& ctx) {
        return x[0] - h * static_cast<double>(ctx.jump_count);
    };
    c.u.gradient = [](double, const Vector& x, const NoiseContext&) {
        Vector g = Vector::Zero(x.size());
        g[0] = 1.0;
        return g;
    };
    c.u.hessian = [](double, const Vector& x, const NoiseContext&) { return Matrix::Zero(x.size(), x.size()); };
    return c;
}

SFICandidate multiplicative_jump_sfi(double c)
{
    SFICandidate out;
    out.mode = JumpMode::state_dependent;
    out.u.value = [c](double, const Vector& x, const NoiseContext& ctx) {
        return x[0] * std::pow(1.0 + c, -static_cast<double>(ctx.jump_count));
    };
    out.u.gradient = [c](double, const Vector& x, const NoiseContext& ctx) {
        Vector g = Vector::Zero(x.size());
        g[0] = std::pow(1.0 + c, -static_cast<double>(ctx.jump_count));
        return g;
    };
    out.u.hessian = [](double, const Vector& x, const NoiseContext&) { return Matrix::Zero(x.size(), x.size()); };
    return out;
}

SFICandidate gbm_sfi(double mu, double sigma)
{
    SFICandidate out;
    const double rate = mu - 0.5 * sigma * sigma;
    auto factor = [rate, sigma](double t, const NoiseContext& ctx) {
        const double w = ctx.w.size() > 0 ? ctx.w[0] : 0.0;
        return std::exp(-rate * t - sigma * w);
    };
    out.u.value = [factor](double t, const Vector& x, const NoiseContext& ctx) { return x[0] * factor(t, ctx); };
    out.u.gradient = [factor](double t, const Vector& x, const NoiseContext& ctx) {
        Vector g = Vector::Zero(x.size());
        g[0] = factor(t, ctx);
        return g;
    };
    out.u.hessian = [](double, const Vector& x, const NoiseContext&) { return Matrix::Zero(x.size(), x.size()); };
    return out;
}

} // namespace gsde
