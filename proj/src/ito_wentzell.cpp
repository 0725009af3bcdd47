#include "gsde/ito_wentzell.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "gsde/csv.hpp"
#include "gsde/error.hpp"

namespace gsde {

namespace {

double second_fd_step(double x) { return std::max(1e-4, 1e-4 * std::abs(x)); }

/// Walks a full path node by node, keeping the noise context current.
class ContextCursor {
public:
    explicit ContextCursor(const SamplePath& path) : path_(path)
    {
        ctx_.t = path.times.front();
        ctx_.w = path.wiener.col(0);
        ctx_.jumps_per_mark.assign(path.mark_count, 0);
    }

    const NoiseContext& current() const noexcept { return ctx_; }

    /// Context at node i+1 just before any jump landing there.
    NoiseContext peek_before_jump(std::size_t next) const
    {
        NoiseContext c = ctx_;
        c.t = path_.times[next];
        c.w = path_.wiener.col(static_cast<Eigen::Index>(next));
        return c;
    }

    void advance(std::size_t next)
    {
        ctx_.t = path_.times[next];
        ctx_.w = path_.wiener.col(static_cast<Eigen::Index>(next));
        const int mark = path_.node_mark[next];
        if (mark >= 0) {
            ++ctx_.jump_count;
            ++ctx_.jumps_per_mark[static_cast<std::size_t>(mark)];
        }
    }

private:
    const SamplePath& path_;
    NoiseContext ctx_;
};

const JumpEvent& jump_at_node(const SamplePath& path, std::size_t node)
{
    const auto it = std::lower_bound(path.jumps.begin(), path.jumps.end(), node,
                                     [](const JumpEvent& ev, std::size_t n) { return ev.node < n; });
    if (it == path.jumps.end() || it->node != node) throw InvalidArgument("no jump recorded at node");
    return *it;
}

StepNoise make_step_noise(const SamplePath& path, const MarkMeasure& measure, std::size_t i,
                          const NoiseContext* before_jump)
{
    StepNoise noise;
    noise.dt = path.times[i + 1] - path.times[i];
    noise.dw = path.increments.col(static_cast<Eigen::Index>(i));
    const int mark = path.node_mark[i + 1];
    if (mark >= 0) {
        const auto& ev = jump_at_node(path, i + 1);
        StepJump jump;
        jump.time = ev.time;
        jump.state_before = ev.state_before;
        jump.mark = measure.atoms().at(static_cast<std::size_t>(mark)).mark;
        jump.context_before = before_jump ? *before_jump : path.context_at(i + 1, true);
        noise.jumps.push_back(std::move(jump));
    }
    return noise;
}

void check_context(const RandomScalarField& F, const MarkMeasure& measure, const SamplePath& path)
{
    if (path.storage != PathStorage::full) throw ContextMismatch("verification needs a fully stored path");
    const auto m = static_cast<std::size_t>(path.wiener.rows());
    if (F.noise_dim && *F.noise_dim != m) {
        throw ContextMismatch("field expects " + std::to_string(*F.noise_dim) + " Wiener components, path has "
                              + std::to_string(m));
    }
    if (F.mark_count && *F.mark_count != path.mark_count) {
        throw ContextMismatch("field expects " + std::to_string(*F.mark_count) + " marks, path has "
                              + std::to_string(path.mark_count));
    }
    if (measure.size() != path.mark_count) throw ContextMismatch("mark measure does not match the path's marks");
}

} // namespace

Vector RandomScalarField::gradient_at(double t, const Vector& x, const NoiseContext& ctx) const
{
    if (gradient) return gradient(t, x, ctx);
    if (!allow_fd) throw DerivativeUnavailable("field gradient is not available");
    return gradient_fd(t, x, ctx);
}

Matrix RandomScalarField::hessian_at(double t, const Vector& x, const NoiseContext& ctx) const
{
    if (hessian) return hessian(t, x, ctx);
    if (!allow_fd) throw DerivativeUnavailable("field hessian is not available");
    return hessian_fd(t, x, ctx);
}

Vector RandomScalarField::gradient_fd(double t, const Vector& x, const NoiseContext& ctx) const
{
    Vector g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = fd_step(x[j]);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        g[j] = (value(t, xp, ctx) - value(t, xm, ctx)) / (xp[j] - xm[j]);
    }
    return g;
}

Matrix RandomScalarField::hessian_fd(double t, const Vector& x, const NoiseContext& ctx) const
{
    const auto n = x.size();
    Matrix H(n, n);
    const double f0 = value(t, x, ctx);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double hj = second_fd_step(x[j]);
        Vector xp = x, xm = x;
        xp[j] += hj;
        xm[j] -= hj;
        H(j, j) = (value(t, xp, ctx) - 2.0 * f0 + value(t, xm, ctx)) / (hj * hj);
        for (Eigen::Index l = j + 1; l < n; ++l) {
            const double hl = second_fd_step(x[l]);
            Vector pp = x, pm = x, mp = x, mm = x;
            pp[j] += hj; pp[l] += hl;
            pm[j] += hj; pm[l] -= hl;
            mp[j] -= hj; mp[l] += hl;
            mm[j] -= hj; mm[l] -= hl;
            H(j, l) = H(l, j) = (value(t, pp, ctx) - value(t, pm, ctx) - value(t, mp, ctx) + value(t, mm, ctx))
                                / (4.0 * hj * hl);
        }
    }
    return H;
}

RandomScalarField RandomScalarField::deterministic(std::function<double(double, const Vector&)> fn,
                                                   std::function<Vector(double, const Vector&)> grad,
                                                   std::function<Matrix(double, const Vector&)> hess)
{
    RandomScalarField F;
    F.value = [fn](double t, const Vector& x, const NoiseContext&) { return fn(t, x); };
    if (grad) F.gradient = [grad](double t, const Vector& x, const NoiseContext&) { return grad(t, x); };
    if (hess) F.hessian = [hess](double t, const Vector& x, const NoiseContext&) { return hess(t, x); };
    return F;
}

double DifferentialTriple::Q(double t, const Vector& x, const NoiseContext& ctx) const
{
    return drift ? drift(t, x, ctx) : 0.0;
}

Vector DifferentialTriple::D(double t, const Vector& x, const NoiseContext& ctx, std::size_t noise_dim) const
{
    if (!diffusion) return Vector::Zero(static_cast<Eigen::Index>(noise_dim));
    return diffusion(t, x, ctx);
}

double DifferentialTriple::G(double t, const Vector& x, const Vector& mark, const NoiseContext& ctx) const
{
    return jump ? jump(t, x, mark, ctx) : 0.0;
}

Matrix DifferentialTriple::D_jacobian(double t, const Vector& x, const NoiseContext& ctx, std::size_t noise_dim) const
{
    const auto m = static_cast<Eigen::Index>(noise_dim);
    if (!diffusion) return Matrix::Zero(m, x.size());
    if (diffusion_jacobian) return diffusion_jacobian(t, x, ctx);
    if (!allow_fd) throw DerivativeUnavailable("∂D/∂x is not available");
    Matrix jac(m, x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = fd_step(x[i]);
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        jac.col(i) = (diffusion(t, xp, ctx) - diffusion(t, xm, ctx)) / (xp[i] - xm[i]);
    }
    return jac;
}

double IncrementTerms::max_abs_term() const noexcept
{
    return std::max({std::abs(own_drift), std::abs(own_diffusion), std::abs(ito_drift), std::abs(ito_diffusion),
                     std::abs(jump_shift), std::abs(jump_own)});
}

IncrementTerms compose_increment(const RandomScalarField& F, const DifferentialTriple& triple,
                                 const CoefficientField& coeffs, double t, const Vector& x, const NoiseContext& ctx,
                                 const StepNoise& noise)
{
    const std::size_t m = coeffs.noise_dim();
    const double h = noise.dt;
    IncrementTerms terms;

    const Vector grad = F.gradient_at(t, x, ctx);
    const Matrix hess = F.hessian_at(t, x, ctx);
    const Matrix dD = triple.D_jacobian(t, x, ctx, m);
    const Vector a = coeffs.drift(t, x);
    const Matrix b = coeffs.diffusion(t, x);

    terms.own_drift = triple.Q(t, x, ctx) * h;
    terms.own_diffusion = triple.D(t, x, ctx, m).dot(noise.dw);
    const double second_order = 0.5 * (b * b.transpose()).cwiseProduct(hess).sum();
    const double cross = (b * dD).trace();
    terms.ito_drift = (a.dot(grad) + second_order + cross) * h;
    terms.ito_diffusion = (b.transpose() * grad).dot(noise.dw);

    for (const auto& jump : noise.jumps) {
        const Vector landed = jump.state_before + coeffs.jump(jump.time, jump.state_before, jump.mark);
        terms.jump_shift += F(jump.time, landed, jump.context_before) - F(jump.time, jump.state_before, jump.context_before);
        terms.jump_own += triple.G(jump.time, landed, jump.mark, jump.context_before);
    }
    return terms;
}

StepNoise step_noise(const SamplePath& path, const MarkMeasure& measure, std::size_t i)
{
    if (path.storage != PathStorage::full) throw InvalidArgument("step noise needs a fully stored path");
    return make_step_noise(path, measure, i, nullptr);
}

ResidualReport verify_along_path(const RandomScalarField& F, const DifferentialTriple& triple,
                                 const CoefficientField& coeffs, const MarkMeasure& measure, const SamplePath& path)
{
    check_context(F, measure, path);
    ResidualReport report;
    report.steps = path.steps();
    ContextCursor cursor(path);
    const NoiseContext start = cursor.current();
    double sum = 0.0;
    for (std::size_t i = 0; i < path.steps(); ++i) {
        NoiseContext before;
        const bool jump_next = path.node_mark[i + 1] >= 0;
        if (jump_next) before = cursor.peek_before_jump(i + 1);
        const StepNoise noise = make_step_noise(path, measure, i, jump_next ? &before : nullptr);
        const auto terms =
            compose_increment(F, triple, coeffs, path.times[i], path.state(i), cursor.current(), noise);
        sum += terms.total();
        report.max_step_term = std::max(report.max_step_term, terms.max_abs_term());
        cursor.advance(i + 1);
    }
    const double change = F(path.final_time(), path.final_state(), cursor.current()) - F(0.0, path.x0(), start);
    report.signed_residual = change - sum;
    report.residual = std::abs(report.signed_residual);
    return report;
}

double fit_order(std::span<const double> dts, std::span<const double> values)
{
    if (dts.size() != values.size() || dts.size() < 2) throw InvalidArgument("order fit needs matching ladders");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto n = static_cast<double>(dts.size());
    for (std::size_t i = 0; i < dts.size(); ++i) {
        if (!(values[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        const double lx = std::log(dts[i]);
        const double ly = std::log(values[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

LadderReport verify_ladder(const RandomScalarField& F, const DifferentialTriple& triple, const CoefficientField& coeffs,
                           const MarkMeasure& measure, const Vector& x0, double T, std::span<const double> dts,
                           std::size_t n_paths, std::uint64_t seed, const ExecutionPolicy& policy)
{
    if (n_paths == 0) throw InvalidArgument("ladder needs at least one path per rung");
    LadderReport report;
    std::vector<double> rung_dts, means, mean_squares;
    for (const double dt : dts) {
        std::vector<double> residuals(n_paths);
        parallel_for(n_paths, policy, [&](std::size_t p) {
            try {
                const auto path = simulate_path(coeffs, measure, x0, T, dt, seed, p);
                residuals[p] = verify_along_path(F, triple, coeffs, measure, path).signed_residual;
            } catch (Error& e) {
                e.annotate_path(p);
                throw;
            }
        });
        LadderRung rung;
        rung.dt = dt;
        rung.paths = n_paths;
        for (const double r : residuals) {
            rung.mean_residual += std::abs(r);
            rung.mean_square_residual += r * r;
            rung.max_residual = std::max(rung.max_residual, std::abs(r));
        }
        rung.mean_residual /= static_cast<double>(n_paths);
        rung.mean_square_residual /= static_cast<double>(n_paths);
        report.rungs.push_back(rung);
        rung_dts.push_back(dt);
        means.push_back(rung.mean_residual);
        mean_squares.push_back(rung.mean_square_residual);
    }
    if (report.rungs.size() >= 2) {
        report.order = fit_order(rung_dts, means);
        report.mean_square_order = fit_order(rung_dts, mean_squares);
    }
    return report;
}

void write_ladder_csv(std::ostream& out, const LadderReport& report)
{
    CsvWriter csv(out);
    csv.header({"dt", "residual", "mean_square_residual", "order"});
    for (std::size_t i = 0; i < report.rungs.size(); ++i) {
        const auto& r = report.rungs[i];
        csv.field(r.dt).field(r.mean_residual).field(r.mean_square_residual);
        if (i == 0) {
            csv.field(std::string_view{});
        } else {
            const auto& prev = report.rungs[i - 1];
            csv.field(std::log(r.mean_residual / prev.mean_residual) / std::log(r.dt / prev.dt));
        }
        csv.end_row();
    }
}

double field_derivative_error(const RandomScalarField& F, std::span<const Vector> probes, const NoiseContext& ctx,
                              double t)
{
    double worst = 0.0;
    auto rel = [](double an, double fd) { return std::abs(an - fd) / std::max(1.0, std::abs(fd)); };
    for (const auto& x : probes) {
        if (F.gradient) {
            const Vector an = F.gradient(t, x, ctx);
            const Vector fd = F.gradient_fd(t, x, ctx);
            for (Eigen::Index i = 0; i < an.size(); ++i) worst = std::max(worst, rel(an[i], fd[i]));
        }
        if (F.hessian) {
            const Matrix an = F.hessian(t, x, ctx);
            const Matrix fd = F.hessian_fd(t, x, ctx);
            for (Eigen::Index i = 0; i < an.rows(); ++i) {
                for (Eigen::Index j = 0; j < an.cols(); ++j) worst = std::max(worst, rel(an(i, j), fd(i, j)));
            }
        }
    }
    return worst;
}

bool triple_is_smooth(const DifferentialTriple& triple, std::size_t noise_dim, std::span<const Vector> probes,
                      const NoiseContext& ctx, double t, double rel_tol)
{
    auto second_diff = [&](const std::function<double(const Vector&)>& f, const Vector& x, Eigen::Index j, double h) {
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        return (f(xp) - 2.0 * f(x) + f(xm)) / (h * h);
    };
    std::vector<std::function<double(const Vector&)>> components;
    components.emplace_back([&](const Vector& x) { return triple.Q(t, x, ctx); });
    for (std::size_t k = 0; k < noise_dim; ++k) {
        components.emplace_back(
            [&, k](const Vector& x) { return triple.D(t, x, ctx, noise_dim)[static_cast<Eigen::Index>(k)]; });
    }
    for (const auto& x : probes) {
        for (const auto& f : components) {
            for (Eigen::Index j = 0; j < x.size(); ++j) {
                const double h = std::max(1e-3, 1e-3 * std::abs(x[j]));
                const double coarse = second_diff(f, x, j, h);
                const double fine = second_diff(f, x, j, 0.5 * h);
                if (!std::isfinite(coarse) || !std::isfinite(fine)) return false;
                if (std::abs(coarse - fine) > rel_tol * std::max(1.0, std::abs(fine))) return false;
            }
        }
    }
    return true;
}

} // namespace gsde
