#include "gsde/sample_path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "gsde/csv.hpp"
#include "gsde/error.hpp"
#include "gsde/philox.hpp"

namespace gsde {

namespace {

constexpr double kMaxExpectedJumps = 1e6;

struct PlannedJump {
    double time;
    std::size_t mark;
};

std::size_t base_step_count(double T, double dt)
{
    const double ratio = T / dt;
    const double nearest = std::round(ratio);
    if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(ratio));
}

double base_node_time(std::size_t k, std::size_t n_steps, double T, double dt)
{
    return k == n_steps ? T : static_cast<double>(k) * dt;
}

std::vector<PlannedJump> plan_jumps(const MarkMeasure& measure, double T, const CounterRng& rng)
{
    std::vector<PlannedJump> out;
    if (measure.empty()) return out;
    const double rate = measure.total_rate();
    double tau = 0.0;
    for (std::uint32_t j = 0;; ++j) {
        const auto u = rng.uniforms(j, Channel::jump_time, 0, 0);
        double next = tau - std::log(u[0]) / rate;
        if (next > T) break;
        if (!out.empty() && next <= out.back().time) next = std::nextafter(out.back().time, T + 1.0);
        if (next > T) break;
        out.push_back({next, measure.select(u[1])});
        tau = next;
    }
    return out;
}

void draw_wiener(const CounterRng& rng, std::uint32_t step, std::uint32_t sub, double h, Vector& dw)
{
    const double scale = std::sqrt(h);
    const auto m = static_cast<std::uint32_t>(dw.size());
    for (std::uint32_t k = 0; k < m; k += 2) {
        const auto z = rng.normals(step, Channel::wiener, sub, k / 2);
        dw[k] = scale * z[0];
        if (k + 1 < m) dw[k + 1] = scale * z[1];
    }
}

[[noreturn]] void blowup(const char* what, double t, const Vector& x)
{
    throw NumericalBlowup(std::string("non-finite ") + what + " at t = " + std::to_string(t)
                              + ", x = " + format_vector(x),
                          t, x);
}

} // namespace

NoiseContext SamplePath::context_at(std::size_t i, bool before_jump) const
{
    if (storage == PathStorage::terminal && i != 0 && i + 1 != nodes()) {
        throw InvalidArgument("terminal-only path has no interior noise context");
    }
    NoiseContext ctx;
    ctx.t = times.at(i);
    ctx.w = wiener.col(static_cast<Eigen::Index>(i));
    ctx.jumps_per_mark.assign(mark_count, 0);
    for (const auto& ev : jumps) {
        if (ev.node > i || (before_jump && ev.node == i)) break;
        ++ctx.jump_count;
        ++ctx.jumps_per_mark[ev.mark];
    }
    return ctx;
}

SamplePath simulate_path(const CoefficientField& coeffs, const MarkMeasure& measure, const Vector& x0, double T,
                         double dt, std::uint64_t seed, std::uint64_t path_index, PathStorage storage)
{
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidGrid("time step must be positive, got " + std::to_string(dt));
    if (!(T >= dt) || !std::isfinite(T)) throw InvalidGrid("horizon must satisfy T >= dt");
    if (static_cast<std::size_t>(x0.size()) != coeffs.state_dim()) {
        throw InvalidArgument("initial state has dimension " + std::to_string(x0.size()) + ", expected "
                              + std::to_string(coeffs.state_dim()));
    }
    if (measure.total_rate() * T > kMaxExpectedJumps) throw InvalidArgument("expected jump count is not moderate");
    const std::size_t n_steps = base_step_count(T, dt);
    if (n_steps > std::numeric_limits<std::uint32_t>::max()) throw InvalidGrid("too many time steps");

    const CounterRng rng(seed, path_index);
    const auto jumps = plan_jumps(measure, T, rng);
    const auto n = static_cast<Eigen::Index>(coeffs.state_dim());
    const auto m = static_cast<Eigen::Index>(coeffs.noise_dim());
    const bool full = storage == PathStorage::full;

    SamplePath path;
    path.seed = seed;
    path.path_index = path_index;
    path.base_dt = dt;
    path.mark_count = measure.size();
    path.storage = storage;

    std::vector<double> states;
    std::vector<double> increments;
    std::vector<double> wiener;
    const std::size_t expected_nodes = full ? n_steps + jumps.size() + 1 : 2;
    states.reserve(expected_nodes * static_cast<std::size_t>(n));
    auto push_state = [&states](const Vector& x) { states.insert(states.end(), x.data(), x.data() + x.size()); };

    Vector x = x0;
    Vector w = Vector::Zero(m);
    Vector dw(m);
    path.times.push_back(0.0);
    path.node_mark.push_back(-1);
    push_state(x);
    wiener.insert(wiener.end(), w.data(), w.data() + m);

    std::size_t next_jump = 0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t_begin = base_node_time(k, n_steps, T, dt);
        const double t_end = base_node_time(k + 1, n_steps, T, dt);
        double t = t_begin;
        for (std::uint32_t sub = 0;; ++sub) {
            // Sub-interval ends at the next jump inside (t, t_end], else at t_end.
            double t_next = t_end;
            int mark = -1;
            if (next_jump < jumps.size() && jumps[next_jump].time <= t_end) {
                t_next = jumps[next_jump].time;
                mark = static_cast<int>(jumps[next_jump].mark);
            }
            const double h = t_next - t;
            draw_wiener(rng, static_cast<std::uint32_t>(k), sub, h, dw);

            const Vector a = coeffs.drift(t, x);
            if (!a.allFinite()) blowup("drift", t, x);
            const Matrix b = coeffs.diffusion(t, x);
            if (!b.allFinite()) blowup("diffusion", t, x);
            Vector x_next = x + a * h + b * dw;
            if (!x_next.allFinite()) blowup("state", t_next, x_next);
            w += dw;

            if (mark >= 0) {
                const auto& atom = measure.atoms()[static_cast<std::size_t>(mark)];
                const Vector g = coeffs.jump(t_next, x_next, atom.mark);
                if (!g.allFinite()) blowup("jump", t_next, x_next);
                const std::size_t node = full ? path.times.size() : 1;
                path.jumps.push_back({node, t_next, static_cast<std::size_t>(mark), x_next});
                x_next += g;
                if (!x_next.allFinite()) blowup("post-jump state", t_next, x_next);
                ++next_jump;
            }
            x = std::move(x_next);

            if (full) {
                path.times.push_back(t_next);
                path.node_mark.push_back(mark);
                push_state(x);
                increments.insert(increments.end(), dw.data(), dw.data() + m);
                wiener.insert(wiener.end(), w.data(), w.data() + m);
            }
            t = t_next;
            if (t_next == t_end) break;
        }
    }

    if (!full) {
        path.times.push_back(T);
        path.node_mark.push_back(-1);
        // Every jump lands on the terminal node of a two-node path; only the
        // mark of the last one can be recorded per node.
        if (!path.jumps.empty()) path.node_mark.back() = static_cast<int>(path.jumps.back().mark);
        push_state(x);
        increments.insert(increments.end(), w.data(), w.data() + m);
        wiener.insert(wiener.end(), w.data(), w.data() + m);
    }

    const auto n_nodes = static_cast<Eigen::Index>(path.times.size());
    path.states = Eigen::Map<const Matrix>(states.data(), n, n_nodes);
    path.increments = Eigen::Map<const Matrix>(increments.data(), m, n_nodes - 1);
    path.wiener = Eigen::Map<const Matrix>(wiener.data(), m, n_nodes);
    return path;
}

PathEnsemble simulate_ensemble(const CoefficientField& coeffs, const MarkMeasure& measure, const Vector& x0,
                               double T, double dt, std::uint64_t seed, std::size_t n_paths,
                               const ExecutionPolicy& policy, PathStorage storage)
{
    if (n_paths == 0) throw InvalidArgument("ensemble needs at least one path");
    PathEnsemble ensemble;
    ensemble.paths.resize(n_paths);
    parallel_for(n_paths, policy, [&](std::size_t i) {
        try {
            ensemble.paths[i] = simulate_path(coeffs, measure, x0, T, dt, seed, i, storage);
        } catch (Error& e) {
            e.annotate_path(i);
            throw;
        }
    });
    return ensemble;
}

PathEnsemble simulate_flow(const CoefficientField& coeffs, const MarkMeasure& measure,
                           std::span<const Vector> initial_points, double T, double dt, std::uint64_t seed,
                           std::uint64_t path_index, const ExecutionPolicy& policy, PathStorage storage)
{
    if (initial_points.empty()) throw InvalidArgument("flow needs at least one initial point");
    PathEnsemble ensemble;
    ensemble.paths.resize(initial_points.size());
    parallel_for(initial_points.size(), policy, [&](std::size_t j) {
        try {
            ensemble.paths[j] = simulate_path(coeffs, measure, initial_points[j], T, dt, seed, path_index, storage);
        } catch (Error& e) {
            e.annotate_path(j);
            throw;
        }
    });
    return ensemble;
}

Vector euler_increment(const CoefficientField& coeffs, const MarkMeasure& measure, const SamplePath& path,
                       std::size_t i)
{
    if (path.storage != PathStorage::full) throw InvalidArgument("increments need a fully stored path");
    const double t = path.times.at(i);
    const double t_next = path.times.at(i + 1);
    const Vector x = path.state(i);
    const Vector dw = path.increments.col(static_cast<Eigen::Index>(i));
    Vector x_next = x + coeffs.drift(t, x) * (t_next - t) + coeffs.diffusion(t, x) * dw;
    const int mark = path.node_mark[i + 1];
    if (mark >= 0) x_next += coeffs.jump(t_next, x_next, measure.atoms()[static_cast<std::size_t>(mark)].mark);
    return x_next - x;
}

TerminalMoments terminal_moments(const PathEnsemble& ensemble, const ExecutionPolicy& policy)
{
    if (ensemble.paths.empty()) throw InvalidArgument("empty ensemble");
    const auto n = ensemble.paths.front().states.rows();
    const auto count = static_cast<double>(ensemble.size());
    TerminalMoments out{Vector(n), Vector(n)};
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto final_of = [&](std::size_t p) {
            const auto& s = ensemble.paths[p].states;
            return s(c, s.cols() - 1);
        };
        const double mean = parallel_sum(ensemble.size(), policy, final_of) / count;
        const double ss = parallel_sum(ensemble.size(), policy, [&](std::size_t p) {
            const double d = final_of(p) - mean;
            return d * d;
        });
        out.mean[c] = mean;
        out.variance[c] = count > 1 ? ss / (count - 1.0) : 0.0;
    }
    return out;
}

std::vector<std::size_t> jump_counts(const PathEnsemble& ensemble)
{
    std::vector<std::size_t> out;
    out.reserve(ensemble.size());
    for (const auto& p : ensemble.paths) out.push_back(p.jumps.size());
    return out;
}

void write_path_csv(std::ostream& out, const SamplePath& path)
{
    CsvWriter csv(out);
    std::vector<std::string> header{"t"};
    for (Eigen::Index i = 0; i < path.states.rows(); ++i) header.push_back("x_" + std::to_string(i + 1));
    header.emplace_back("jump_flag");
    header.emplace_back("mark_index");
    csv.header(header);
    for (std::size_t i = 0; i < path.nodes(); ++i) {
        csv.field(path.times[i]);
        for (Eigen::Index c = 0; c < path.states.rows(); ++c) csv.field(path.states(c, static_cast<Eigen::Index>(i)));
        csv.field(path.node_mark[i] >= 0 ? 1 : 0).field(path.node_mark[i]);
        csv.end_row();
    }
}

} // namespace gsde
