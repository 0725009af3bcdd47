#include "gsde/kolmogorov.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "json.hpp"

#include "gsde/density_field.hpp"
#include "gsde/error.hpp"
#include "stencil.hpp"

namespace gsde {

namespace {

constexpr std::size_t kBandCheckEvery = 32;

std::size_t step_count(double span, double dt)
{
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidGrid("time step must be positive");
    if (!(span > 0.0) || !std::isfinite(span)) throw InvalidGrid("time span must be positive");
    const double ratio = span / dt;
    const double nearest = std::round(ratio);
    if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) return std::max<std::size_t>(1, static_cast<std::size_t>(nearest));
    return static_cast<std::size_t>(std::ceil(ratio));
}

void check_jump_rate(const MarkMeasure& measure, double dt)
{
    if (measure.total_rate() * dt > 1.0) {
        throw StabilityBoundViolated("total jump rate times dt = " + std::to_string(measure.total_rate() * dt)
                                     + " exceeds 1");
    }
}

double sum_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (const double x : v) s += x;
    return s;
}

} // namespace

DensityTrajectory solve_forward(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& p0,
                                double T, double dt, const SolverOptions& options, double t0)
{
    const GridSpec& spec = p0.spec;
    const double vol = spec.cell_volume();
    const std::size_t n_steps = step_count(T, dt);
    check_jump_rate(measure, dt);

    detail::NodeCoefficients nodes(spec, coeffs);
    detail::JumpCache jumps(spec, coeffs, measure, false, options.domain);
    std::vector<double> p = p0.values;
    std::vector<double> next(p.size());
    std::vector<double> moved(p.size());
    if (options.check_support) detail::check_boundary_band(spec, p, options.support_tol, t0);

    DensityTrajectory out;
    auto snapshot = [&](double t) {
        GridDensity g(spec);
        g.values = p;
        out.times.push_back(t);
        out.masses.push_back(g.mass());
        out.snapshots.push_back(std::move(g));
    };
    snapshot(t0);

    bool checked = false;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        const double t_next = k + 1 == n_steps ? t0 + T : t0 + static_cast<double>(k + 1) * dt;
        const double h = t_next - t;
        nodes.prepare(t);
        if (!coeffs.autonomous() || !checked) {
            nodes.check_stability(std::max(h, dt), spec);
            checked = true;
        }
        next = p;
        detail::add_forward_increment(spec, nodes, p, h, nullptr, next);
        const bool band_step = options.check_support && ((k + 1) % kBandCheckEvery == 0 || k + 1 == n_steps);
        for (std::size_t a = 0; a < measure.size(); ++a) {
            const double rate = measure.atoms()[a].rate;
            const auto& transfer = jumps.at(t, a);
            if (band_step && transfer.escaping(p) > options.support_tol * sum_of(p)) {
                throw SupportOverflow("jumps move mass off the grid at t = " + std::to_string(t));
            }
            transfer.apply(p, moved);
            for (std::size_t j = 0; j < p.size(); ++j) next[j] += h * rate * (moved[j] - p[j]);
        }
        out.clipped_mass += detail::clip_negative(next, out.min_pre_clip) * vol;
        p.swap(next);
        if (band_step) detail::check_boundary_band(spec, p, options.support_tol, t_next);
        if (k + 1 == n_steps || (options.snapshot_every > 0 && (k + 1) % options.snapshot_every == 0)) {
            snapshot(t_next);
        }
    }
    return out;
}

DensityTrajectory solve_backward(const CoefficientField& coeffs, const MarkMeasure& measure,
                                 const GridDensity& terminal, double t, double s_final, double ds,
                                 const SolverOptions& options)
{
    if (!(s_final < t)) throw InvalidArgument("backward solve needs s_final < t");
    const GridSpec& spec = terminal.spec;
    const std::size_t n_steps = step_count(t - s_final, ds);
    check_jump_rate(measure, ds);

    detail::NodeCoefficients nodes(spec, coeffs);
    detail::JumpCache jumps(spec, coeffs, measure, true, std::nullopt);
    std::vector<double> p = terminal.values;
    std::vector<double> next(p.size());
    std::vector<double> moved(p.size());

    DensityTrajectory out;
    auto snapshot = [&](double s) {
        GridDensity g(spec);
        g.values = p;
        out.times.push_back(s);
        out.masses.push_back(g.mass());
        out.snapshots.push_back(std::move(g));
    };
    snapshot(t);

    bool checked = false;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double s = t - static_cast<double>(k) * ds;
        const double s_next = k + 1 == n_steps ? s_final : t - static_cast<double>(k + 1) * ds;
        const double h = s - s_next;
        nodes.prepare(s);
        if (!coeffs.autonomous() || !checked) {
            nodes.check_stability(std::max(h, ds), spec);
            checked = true;
        }
        next = p;
        detail::add_backward_increment(spec, nodes, p, h, next);
        for (std::size_t a = 0; a < measure.size(); ++a) {
            const double rate = measure.atoms()[a].rate;
            jumps.at(s, a).apply(p, moved);
            for (std::size_t j = 0; j < p.size(); ++j) next[j] += h * rate * (moved[j] - p[j]);
        }
        out.clipped_mass += detail::clip_negative(next, out.min_pre_clip) * spec.cell_volume();
        p.swap(next);
        const bool last = k + 1 == n_steps;
        if (options.check_support && (last || (k + 1) % kBandCheckEvery == 0)) {
            detail::check_boundary_band(spec, p, options.support_tol, s_next);
        }
        if (last || (options.snapshot_every > 0 && (k + 1) % options.snapshot_every == 0)) snapshot(s_next);
    }
    return out;
}

TransitionDensityGrid transition_density(const CoefficientField& coeffs, const MarkMeasure& measure,
                                         const GridSpec& spec, std::span<const std::size_t> x_nodes, double s,
                                         double t, double ds, const ExecutionPolicy& policy, double mollifier)
{
    TransitionDensityGrid out;
    out.s = s;
    out.t = t;
    out.spec = spec;
    out.x_nodes.assign(x_nodes.begin(), x_nodes.end());
    out.values.resize(static_cast<Eigen::Index>(x_nodes.size()), static_cast<Eigen::Index>(spec.size()));
    const double width = mollifier > 0.0 ? mollifier : 2.0 * spec.axis(0).dx;
    // As a function of y the solution is no density, so boundary truncation
    // only matters where p(s; y) is negligible; the band check is skipped.
    SolverOptions options;
    options.check_support = false;
    parallel_for(x_nodes.size(), policy, [&](std::size_t r) {
        const GridDensity terminal = gaussian_density(spec, spec.node(x_nodes[r]), width);
        const auto solution = solve_backward(coeffs, measure, terminal, t, s, ds, options);
        const auto& final = solution.final().values;
        for (std::size_t j = 0; j < final.size(); ++j) {
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = final[j];
        }
    });
    return out;
}

DualityReport check_duality(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& p0, double s,
                            double t, double dt, std::size_t stride, const ExecutionPolicy& policy)
{
    if (p0.spec.dims() != 1) throw InvalidGrid("duality check runs on one-dimensional grids");
    if (!(s > 0.0 && s < t)) throw InvalidArgument("duality check needs 0 < s < t");
    if (stride == 0) throw InvalidArgument("stride must be positive");
    const GridSpec& spec = p0.spec;
    const auto at_s = solve_forward(coeffs, measure, p0, s, dt);
    const auto at_t = solve_forward(coeffs, measure, at_s.final(), t - s, dt, {}, s);
    const auto& ps = at_s.final().values;
    const auto& pt = at_t.final().values;

    // Rows whose direct value is below this floor carry no L1 weight worth a
    // backward solve; they are compared against zero instead.
    const double floor = 1e-10 * at_t.final().max_value();
    std::vector<std::size_t> all_nodes, solved_nodes;
    for (std::size_t j = 0; j < spec.size(); j += stride) {
        all_nodes.push_back(j);
        if (pt[j] >= floor) solved_nodes.push_back(j);
    }
    const auto grid = transition_density(coeffs, measure, spec, solved_nodes, s, t, dt, policy);
    const Eigen::Map<const Vector> ps_vec(ps.data(), static_cast<Eigen::Index>(ps.size()));
    const Vector composed = grid.values * ps_vec * spec.cell_volume();

    DualityReport report;
    std::size_t r = 0;
    for (const std::size_t j : all_nodes) {
        double c = 0.0;
        if (r < solved_nodes.size() && solved_nodes[r] == j) c = composed[static_cast<Eigen::Index>(r++)];
        report.x.push_back(spec.node(j)[0]);
        report.composed.push_back(c);
        report.direct.push_back(pt[j]);
        const double diff = std::abs(c - pt[j]);
        report.l1 += diff * spec.axis(0).dx * static_cast<double>(stride);
        report.linf = std::max(report.linf, diff);
    }
    return report;
}

McDensity mc_density(std::span<const Vector> points, const GridSpec& spec)
{
    if (points.empty()) throw InvalidArgument("no samples");
    McDensity out;
    out.density = GridDensity(spec);
    out.samples = points.size();
    std::vector<std::size_t> counts(spec.size(), 0);
    for (const auto& x : points) {
        if (static_cast<std::size_t>(x.size()) != spec.dims()) throw GridMismatch("sample dimension does not match grid");
        std::size_t flat = 0;
        bool inside = true;
        for (std::size_t d = 0; d < spec.dims() && inside; ++d) {
            const auto& a = spec.axis(d);
            const double s = std::round((x[static_cast<Eigen::Index>(d)] - a.lo) / a.dx);
            if (!(s >= 0.0 && s < static_cast<double>(a.count))) {
                inside = false;
                break;
            }
            flat += static_cast<std::size_t>(s) * spec.stride(d);
        }
        if (inside) {
            ++counts[flat];
        } else {
            ++out.overflow_count;
        }
    }
    const double scale = 1.0 / (static_cast<double>(points.size()) * spec.cell_volume());
    for (std::size_t j = 0; j < counts.size(); ++j) out.density.values[j] = static_cast<double>(counts[j]) * scale;
    out.overflow_mass = static_cast<double>(out.overflow_count) / static_cast<double>(points.size());
    return out;
}

McDensity mc_density(const PathEnsemble& ensemble, const GridSpec& spec)
{
    std::vector<Vector> finals;
    finals.reserve(ensemble.size());
    for (const auto& p : ensemble.paths) finals.push_back(p.final_state());
    return mc_density(finals, spec);
}

DensityMetrics compare_densities(const GridDensity& p1, const GridDensity& p2)
{
    if (!p1.spec.same_as(p2.spec)) throw GridMismatch("densities live on different grids");
    DensityMetrics m;
    for (std::size_t j = 0; j < p1.values.size(); ++j) {
        const double d = std::abs(p1.values[j] - p2.values[j]);
        m.l1 += d;
        m.linf = std::max(m.linf, d);
    }
    m.l1 *= p1.spec.cell_volume();
    m.mass_err = p1.mass() - p2.mass();
    return m;
}

void write_metrics_json(std::ostream& out, const DensityMetrics& metrics, double runtime_s)
{
    nlohmann::ordered_json j;
    j["l1"] = metrics.l1;
    j["linf"] = metrics.linf;
    j["mass_err"] = metrics.mass_err;
    j["runtime_s"] = runtime_s;
    out << j.dump(2) << '\n';
}

GridDensity mean_field_average(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& rho0,
                               double T, double dt, std::size_t n_realizations, std::uint64_t seed,
                               const ExecutionPolicy& policy)
{
    if (n_realizations == 0) throw InvalidArgument("need at least one realization");
    // The driving path only supplies noise; start it where rho0 peaks.
    const auto peak = std::max_element(rho0.values.begin(), rho0.values.end()) - rho0.values.begin();
    const Vector x0 = rho0.spec.node(static_cast<std::size_t>(peak));
    std::vector<std::vector<double>> finals(n_realizations);
    parallel_for(n_realizations, policy, [&](std::size_t r) {
        try {
            const auto path = simulate_path(coeffs, measure, x0, T, dt, seed, r);
            finals[r] = evolve_density_field(coeffs, measure, path, rho0).final().values;
        } catch (Error& e) {
            e.annotate_path(r);
            throw;
        }
    });
    GridDensity out(rho0.spec);
    for (const auto& f : finals) {
        for (std::size_t j = 0; j < f.size(); ++j) out.values[j] += f[j];
    }
    for (auto& v : out.values) v /= static_cast<double>(n_realizations);
    return out;
}

std::vector<double> lattice_masses(const GridDensity& density, double x0, double h, std::size_t count)
{
    if (density.spec.dims() != 1) throw InvalidGrid("lattice masses need a one-dimensional grid");
    std::vector<double> out(count, 0.0);
    const double vol = density.spec.cell_volume();
    for (std::size_t j = 0; j < density.spec.size(); ++j) {
        const double k = std::round((density.spec.axis(0).node(j) - x0) / h);
        if (k >= 0.0 && k < static_cast<double>(count)) out[static_cast<std::size_t>(k)] += density.values[j] * vol;
    }
    return out;
}

} // namespace gsde
