#include "gsde/density_field.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "gsde/csv.hpp"
#include "gsde/error.hpp"
#include "stencil.hpp"

namespace gsde {

namespace {

constexpr std::size_t kBandCheckEvery = 32;

} // namespace

double JacobianPath::log_consistency() const
{
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        worst = std::max(worst, std::abs(std::exp(log_values[i]) - values[i]) / values[i]);
    }
    return worst;
}

JacobianPath evolve_jacobian(const CoefficientField& coeffs, const MarkMeasure& measure, const SamplePath& path)
{
    if (path.storage != PathStorage::full) throw InvalidArgument("Jacobian needs a fully stored path");
    if (measure.size() != path.mark_count) throw ContextMismatch("mark measure does not match the path's marks");
    JacobianPath out;
    out.times = path.times;
    out.values.reserve(path.nodes());
    out.log_values.reserve(path.nodes());
    out.drift_terms.reserve(path.steps());
    double J = 1.0;
    double log_J = 0.0;
    out.values.push_back(J);
    out.log_values.push_back(log_J);
    const std::size_t m = coeffs.noise_dim();
    std::size_t next_jump = 0;

    for (std::size_t i = 0; i < path.steps(); ++i) {
        const double t = path.times[i];
        const double h = path.times[i + 1] - t;
        const Vector x = path.state(i);
        double K = coeffs.has_drift() ? coeffs.drift_jacobian(t, x).trace() : 0.0;
        double increment = 0.0;
        if (coeffs.has_diffusion()) {
            const auto db = coeffs.diffusion_jacobian(t, x);
            double sum_div2 = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                const double div = db[k].trace();
                K += 0.5 * (div * div - (db[k] * db[k]).trace());
                sum_div2 += div * div;
                increment += div * path.increments(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
            }
            increment -= 0.5 * sum_div2 * h;
        }
        increment += K * h;
        out.drift_terms.push_back(K);
        J *= std::exp(increment);
        log_J += increment;

        if (path.node_mark[i + 1] >= 0) {
            const JumpEvent& ev = path.jumps.at(next_jump++);
            const Vector& mark = measure.atoms().at(ev.mark).mark;
            double factor = 1.0;
            if (coeffs.has_jump() && coeffs.jump_depends_on_state()) {
                const auto n = static_cast<Eigen::Index>(coeffs.state_dim());
                factor = (Matrix::Identity(n, n) + coeffs.jump_jacobian(ev.time, ev.state_before, mark)).determinant();
            }
            if (!(factor > 0.0)) {
                throw NonInvertibleJumpFlow("det(I + dg/dx) = " + std::to_string(factor) + " at t = "
                                                + std::to_string(ev.time),
                                            ev.time, factor);
            }
            out.jump_factors.push_back(factor);
            J *= factor;
            log_J += std::log(factor);
        }
        if (!std::isfinite(J) || !(J > 0.0)) {
            throw NumericalBlowup("Jacobian left (0, inf) at t = " + std::to_string(path.times[i + 1]),
                                  path.times[i + 1], path.state(i + 1));
        }
        out.values.push_back(J);
        out.log_values.push_back(log_J);
    }
    return out;
}

DensityFieldPath evolve_density_field(const CoefficientField& coeffs, const MarkMeasure& measure,
                                      const SamplePath& driving_path, const GridDensity& rho0,
                                      const DensityOptions& options)
{
    const SamplePath& path = driving_path;
    if (path.storage != PathStorage::full) throw InvalidArgument("density evolution needs a fully stored path");
    if (measure.size() != path.mark_count) throw ContextMismatch("mark measure does not match the path's marks");
    if (static_cast<std::size_t>(path.increments.rows()) != coeffs.noise_dim()) {
        throw ContextMismatch("path noise dimension does not match the coefficients");
    }
    const GridSpec& spec = rho0.spec;
    const double vol = spec.cell_volume();

    DensityFieldPath out;
    out.spec = spec;
    out.seed = path.seed;
    out.path_index = path.path_index;

    detail::NodeCoefficients nodes(spec, coeffs);
    detail::JumpCache jumps(spec, coeffs, measure, false, options.domain);
    std::vector<double> rho = rho0.values;
    std::vector<double> next(rho.size());
    if (options.check_support) detail::check_boundary_band(spec, rho, options.support_tol, 0.0);

    auto snapshot = [&](std::size_t node) {
        GridDensity g(spec);
        g.values = rho;
        out.snapshot_nodes.push_back(node);
        out.snapshot_times.push_back(path.times[node]);
        out.snapshot_masses.push_back(g.mass());
        out.snapshots.push_back(std::move(g));
    };
    snapshot(0);

    double max_step = 0.0;
    for (std::size_t i = 0; i < path.steps(); ++i) max_step = std::max(max_step, path.times[i + 1] - path.times[i]);
    bool checked = false;

    for (std::size_t i = 0; i < path.steps(); ++i) {
        const double t = path.times[i];
        const double h = path.times[i + 1] - t;
        nodes.prepare(t);
        if (!coeffs.autonomous()) {
            nodes.check_stability(h, spec);
        } else if (!checked) {
            nodes.check_stability(max_step, spec);
            checked = true;
        }
        const Vector dw = path.increments.col(static_cast<Eigen::Index>(i));
        next = rho;
        detail::add_forward_increment(spec, nodes, rho, h, &dw, next);
        out.clipped_mass += detail::clip_negative(next, out.min_pre_clip) * vol;
        rho.swap(next);

        const int mark = path.node_mark[i + 1];
        if (mark >= 0) {
            const double t_jump = path.times[i + 1];
            const auto& transfer = jumps.at(t_jump, static_cast<std::size_t>(mark));
            double before = 0.0;
            for (const double v : rho) before += v;
            if (options.check_support && transfer.escaping(rho) > options.support_tol * before) {
                throw SupportOverflow("jump at t = " + std::to_string(t_jump) + " moves mass off the grid");
            }
            transfer.apply(rho, next);
            rho.swap(next);
            double after = 0.0;
            for (const double v : rho) after += v;
            out.jump_mass_changes.push_back((after - before) * vol);
        }

        const bool last = i + 1 == path.steps();
        if (options.check_support && (last || (i + 1) % kBandCheckEvery == 0)) {
            detail::check_boundary_band(spec, rho, options.support_tol, path.times[i + 1]);
        }
        if (!last && options.snapshot_every > 0 && (i + 1) % options.snapshot_every == 0) snapshot(i + 1);
        if (last) snapshot(i + 1);
    }
    if (path.steps() == 0) snapshot(0);
    return out;
}

InvariantReport check_density_invariant(const JacobianPath& jac, const DensityFieldPath& dens, const SamplePath& path,
                                        const GridDensity& rho0)
{
    if (jac.values.size() != path.nodes()) throw GridMismatch("Jacobian and path have different node counts");
    if (dens.seed != path.seed || dens.path_index != path.path_index) {
        throw ContextMismatch("density field was driven by a different path");
    }
    InvariantReport report;
    if (!rho0.contains(path.x0())) throw SupportOverflow("x0 lies outside the density grid");
    report.rho0_at_x0 = rho0.interpolate(path.x0());
    if (!(report.rho0_at_x0 > 0.0)) throw InvalidArgument("rho0 vanishes at x0; the relative deviation is undefined");
    for (std::size_t s = 0; s < dens.snapshots.size(); ++s) {
        const std::size_t node = dens.snapshot_nodes[s];
        if (node >= path.nodes()) throw ContextMismatch("snapshot node beyond the path");
        const Vector x = path.state(node);
        if (!dens.snapshots[s].contains(x)) {
            throw SupportOverflow("x(t) = " + format_vector(x) + " left the grid at t = " + std::to_string(path.times[node]));
        }
        InvariantRow row;
        row.t = path.times[node];
        row.jacobian = jac.values[node];
        row.rho_interp = dens.snapshots[s].interpolate(x);
        row.product = row.jacobian * row.rho_interp;
        row.rel_dev = std::abs(row.product - report.rho0_at_x0) / report.rho0_at_x0;
        report.max_rel_dev = std::max(report.max_rel_dev, row.rel_dev);
        report.rows.push_back(row);
    }
    return report;
}

void write_invariant_csv(std::ostream& out, const InvariantReport& report)
{
    CsvWriter csv(out);
    csv.header({"t", "J", "rho_interp", "product", "rel_dev"});
    for (const auto& r : report.rows) {
        csv.field(r.t).field(r.jacobian).field(r.rho_interp).field(r.product).field(r.rel_dev).end_row();
    }
}

TestFunctionSet default_test_functions()
{
    return {
        {"one", [](const Vector&) { return 1.0; }},
        {"x", [](const Vector& x) { return x[0]; }},
        {"x2", [](const Vector& x) { return x[0] * x[0]; }},
        {"cos_x", [](const Vector& x) { return std::cos(x[0]); }},
    };
}

WeakCheckReport check_normalization(const DensityFieldPath& dens, const TestFunctionSet& fs, const PathEnsemble& flow,
                                    const GridDensity& rho0)
{
    if (flow.paths.empty()) throw InvalidArgument("empty flow ensemble");
    for (const auto& p : flow.paths) {
        if (p.seed != dens.seed || p.path_index != dens.path_index) {
            throw ContextMismatch("flow paths must share the density's driving noise");
        }
    }
    WeakCheckReport report;
    const GridDensity& final = dens.final();
    report.mass_error = final.mass() - 1.0;

    std::vector<double> weights(flow.size());
    double total = 0.0;
    for (std::size_t j = 0; j < flow.size(); ++j) {
        weights[j] = rho0.interpolate(flow.paths[j].x0());
        total += weights[j];
    }
    if (!(total > 0.0)) throw InvalidArgument("flow initial points carry no rho0 weight");
    double sum_w2 = 0.0;
    for (auto& w : weights) {
        w /= total;
        sum_w2 += w * w;
    }
    const double effective_n = 1.0 / sum_w2;

    for (const auto& tf : fs) {
        WeakCheckRow row;
        row.name = tf.name;
        row.grid_value = final.integrate(tf.f);
        double mean = 0.0;
        std::vector<double> fx(flow.size());
        for (std::size_t j = 0; j < flow.size(); ++j) {
            fx[j] = tf.f(flow.paths[j].final_state());
            mean += weights[j] * fx[j];
        }
        double var = 0.0;
        for (std::size_t j = 0; j < flow.size(); ++j) var += weights[j] * (fx[j] - mean) * (fx[j] - mean);
        row.flow_value = mean;
        row.flow_stderr = std::sqrt(var / effective_n);
        row.abs_diff = std::abs(row.grid_value - row.flow_value);
        report.rows.push_back(row);
    }
    return report;
}

PathEnsemble density_flow(const CoefficientField& coeffs, const MarkMeasure& measure, const GridDensity& rho0,
                          double T, double dt, std::uint64_t seed, std::uint64_t path_index,
                          const ExecutionPolicy& policy)
{
    std::vector<Vector> starts;
    for (std::size_t j = 0; j < rho0.spec.size(); ++j) {
        if (rho0.values[j] > 0.0) starts.push_back(rho0.spec.node(j));
    }
    if (starts.empty()) throw InvalidArgument("rho0 has empty support");
    return simulate_flow(coeffs, measure, starts, T, dt, seed, path_index, policy, PathStorage::terminal);
}

} // namespace gsde
