// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gsde/density_field.hpp"
#include "gsde/first_integral.hpp"
#include "gsde/ito_wentzell.hpp"
#include "gsde/kolmogorov.hpp"
#include "gsde/models.hpp"
#include "gsde/philox.hpp"
#include "gsde/scenario.hpp"

using namespace gsde;

namespace {

constexpr std::uint64_t kSeed = 20240611;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

Vector vec(double v) { return Vector::Constant(1, v); }

double gaussian_pdf(double x, double mean, double var)
{
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

double poisson_pmf(int k, double mean)
{
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

Model drift_diffusion(double a, double b)
{
    CoefficientField f(1, 1);
    f.with_drift([a](double, const Vector&) { return vec(a); });
    f.with_diffusion([b](double, const Vector&) { return Matrix::Constant(1, 1, b); });
    return {f, MarkMeasure::none()};
}

Outcome exact_conservation()
{
    const double a = 0.7, b = 0.4;
    const auto lin = drift_diffusion(a, b);
    const auto u_lin = linear_sfi(a, b);
    const auto ens_lin = simulate_ensemble(lin.coeffs, lin.measure, vec(1.0), 1.0, 1e-3, kSeed, 1000);
    const auto rep_lin = check_conservation(u_lin, sfi_triple(u_lin, lin.coeffs), lin.coeffs, lin.measure, ens_lin);

    const auto mul = models::multiplicative_jump(0.5, 2.0);
    const auto u_mul = multiplicative_jump_sfi(0.5);
    const auto ens_mul = simulate_ensemble(mul.coeffs, mul.measure, vec(1.0), 1.0, 1e-3, kSeed, 1000);
    const auto rep_mul = check_conservation(u_mul, sfi_triple(u_mul, mul.coeffs), mul.coeffs, mul.measure, ens_mul);

    const double tol = 1e-12;
    const double worst = std::max({rep_lin.max_residual, rep_mul.max_residual, rep_lin.max_increment_residual,
                                   rep_mul.max_increment_residual});
    return {worst <= tol, "linear max " + fmt(rep_lin.max_residual) + ", multiplicative max "
                              + fmt(rep_mul.max_residual) + ", increment sums " + fmt(rep_lin.max_increment_residual)
                              + "/" + fmt(rep_mul.max_increment_residual) + " | tol " + fmt(tol)};
}

Outcome ito_wentzell_order()
{
    const auto heat = models::heat(1.0);
    const auto F = RandomScalarField::deterministic(
        [](double, const Vector& x) { return x[0] * x[0]; }, [](double, const Vector& x) { return Vector(2.0 * x); },
        [](double, const Vector&) { return Matrix::Constant(1, 1, 2.0); });
    std::vector<double> dts;
    for (int k = 6; k <= 10; ++k) dts.push_back(std::ldexp(1.0, -k));
    const auto ladder =
        verify_ladder(F, DifferentialTriple::zero(), heat.coeffs, heat.measure, vec(0.0), 1.0, dts, 1000, kSeed);
    const double tol = 0.9;
    return {ladder.order >= tol, "order of mean |residual| " + fmt(ladder.order) + " (mean-square residual order "
                                     + fmt(ladder.mean_square_order) + ") | need >= " + fmt(tol)};
}

Outcome determinant_identity()
{
    const double tol = 1e-8;
    const CounterRng rng(kSeed, 0);
    double worst = 0.0;
    double worst_branch = 0.0;
    Matrix C(2, 2);
    C << 0.3, -0.2, 0.1, 0.4;
    const auto m1 = models::linear_jump_1d(0.5);
    const auto m2 = models::linear_jump_2d(C);
    for (std::uint32_t i = 0; i < 10000; ++i) {
        const auto u = rng.uniforms(i, Channel::user, 0, 0);
        const auto v = rng.uniforms(i, Channel::user, 0, 1);
        const double t = u[0];
        const double gamma = 0.9 * (2.0 * u[1] - 1.0);
        const Vector x1 = vec(-5.0 + 10.0 * v[0]);
        const auto s1 = inverse_jump_map(m1.coeffs, t, x1, vec(gamma));
        worst = std::max(worst, std::abs(s1.inverse_det * s1.forward_det - 1.0));
        Vector x2(2);
        x2 << -5.0 + 10.0 * v[0], -5.0 + 10.0 * v[1];
        const auto s2 = inverse_jump_map(m2.coeffs, t, x2, vec(gamma));
        worst = std::max(worst, std::abs(s2.inverse_det * s2.forward_det - 1.0));
        // Branch consistency: x⁻¹(z + g(z)) = z.
        const Vector back = inverse_jump_map(m2.coeffs, t, x2 + m2.coeffs.jump(t, x2, vec(gamma)), vec(gamma)).y;
        worst_branch = std::max(worst_branch, (back - x2).cwiseAbs().maxCoeff());
    }
    return {worst <= tol && worst_branch <= 1e-10, "max |DA - 1| " + fmt(worst) + ", branch error "
                                                        + fmt(worst_branch) + " | tol " + fmt(tol) + " / 1e-10"};
}

Outcome jacobian_oracles()
{
    const auto lin = models::linear_drift(0.7);
    const auto path = simulate_path(lin.coeffs, lin.measure, vec(1.0), 1.0, 1e-4, kSeed, 0);
    const double J = evolve_jacobian(lin.coeffs, lin.measure, path).final_value();
    const double rel = std::abs(J - std::exp(0.7)) / std::exp(0.7);

    const auto jump = models::multiplicative_jump(0.5, 5.0);
    int exact = 0;
    std::size_t max_jumps = 0;
    for (std::uint64_t p = 0; p < 200; ++p) {
        const auto jp = simulate_path(jump.coeffs, jump.measure, vec(1.0), 1.0, 1e-3, kSeed, p);
        const std::size_t N = jp.jumps.size();
        max_jumps = std::max(max_jumps, N);
        const double oracle = std::ldexp(std::pow(3.0, static_cast<double>(N)), -static_cast<int>(N));
        if (evolve_jacobian(jump.coeffs, jump.measure, jp).final_value() == oracle) ++exact;
    }
    return {rel <= 1e-3 && exact == 200, "J(1) rel error " + fmt(rel) + " (tol 1e-3); 1.5^N exact on " +
                                              std::to_string(exact) + "/200 paths (N up to " +
                                              std::to_string(max_jumps) + ")"};
}

Outcome density_pushforward()
{
    const auto heat = models::heat(1.0);
    const auto spec = GridSpec::line(-5.0, 5.0, 0.01);
    const double R = 1.5;
    const auto rho0 = bump_density(spec, vec(0.0), R);
    double Z = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) Z += bump_shape(spec.node(j), vec(0.0), R) * spec.cell_volume();

    DensityOptions opts;
    opts.snapshot_every = 250;
    double worst_linf = 0.0;
    double worst_dev = 0.0;
    for (std::uint64_t p = 0; p < 4; ++p) {
        const auto path = simulate_path(heat.coeffs, heat.measure, vec(0.0), 0.25, 1e-5, kSeed, p);
        const auto dens = evolve_density_field(heat.coeffs, heat.measure, path, rho0, opts);
        for (std::size_t s = 0; s < dens.snapshots.size(); ++s) {
            const double w = path.wiener(0, static_cast<Eigen::Index>(dens.snapshot_nodes[s]));
            for (std::size_t j = 0; j < spec.size(); ++j) {
                const double oracle = bump_shape(spec.node(j) - vec(w), vec(0.0), R) / Z;
                worst_linf = std::max(worst_linf, std::abs(dens.snapshots[s].values[j] - oracle));
            }
        }
        const auto jac = evolve_jacobian(heat.coeffs, heat.measure, path);
        worst_dev = std::max(worst_dev, check_density_invariant(jac, dens, path, rho0).max_rel_dev);
    }
    return {worst_linf <= 1e-2 && worst_dev <= 0.05,
            "Linf " + fmt(worst_linf) + " (tol 1e-2), max |J rho(x(t)) / rho0(x0) - 1| " + fmt(worst_dev)
                + " (tol 0.05), 4 driving paths"};
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Outcome forward_oracles()
{
    const double budget = 60.0;
    auto start = std::chrono::steady_clock::now();
    const auto heat = models::heat(1.0);
    const auto spec = GridSpec::line(-6.0, 6.0, 0.01);
    const double s0 = 0.02;
    const auto p0 = gaussian_density(spec, vec(0.0), s0);
    const auto heat_sol = solve_forward(heat.coeffs, heat.measure, p0, 0.5, 2.5e-5);
    double linf = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const double oracle = gaussian_pdf(spec.node(j)[0], 0.0, 0.5 + s0 * s0);
        linf = std::max(linf, std::abs(heat_sol.final().values[j] - oracle));
    }

    const double heat_secs = seconds_since(start);

    start = std::chrono::steady_clock::now();
    const auto jump = models::pure_jump(0.5, 2.0);
    const GridSpec lattice({Axis{-0.25, 0.01, 1000}});
    const auto q0 = gaussian_density(lattice, vec(0.0), s0);
    const auto jump_sol = solve_forward(jump.coeffs, jump.measure, q0, 1.0, 1e-4);
    const auto masses = lattice_masses(jump_sol.final(), 0.0, 0.5, 20);
    double sup = 0.0;
    for (int k = 0; k < 20; ++k) sup = std::max(sup, std::abs(masses[static_cast<std::size_t>(k)] - poisson_pmf(k, 2.0)));
    const double lattice_secs = seconds_since(start);
    return {linf <= 5e-3 && sup <= 1e-3 && heat_secs < budget && lattice_secs < budget,
            "heat Linf " + fmt(linf) + " (tol 5e-3, " + fmt(heat_secs) + " s); lattice sup " + fmt(sup)
                + " (tol 1e-3, " + fmt(lattice_secs) + " s) | 60 s each"};
}

Outcome duality()
{
    const auto heat = models::heat(1.0);
    const auto spec = GridSpec::line(-6.0, 6.0, 0.01);
    const auto p0 = gaussian_density(spec, vec(0.0), 0.02);
    const auto report = check_duality(heat.coeffs, heat.measure, p0, 0.25, 0.5, 2.5e-5, 4);
    return {report.l1 <= 1e-2, "L1 " + fmt(report.l1) + ", Linf " + fmt(report.linf) + " | tol 1e-2"};
}

Outcome mean_field()
{
    const auto heat = models::heat(1.0);
    const auto spec = GridSpec::line(-6.0, 6.0, 0.01);
    const auto rho0 = bump_density(spec, vec(0.0), 1.5);
    const double T = 0.5, dt = 4e-5;
    const auto avg = mean_field_average(heat.coeffs, heat.measure, rho0, T, dt, 1000, kSeed);
    const auto fwd = solve_forward(heat.coeffs, heat.measure, rho0, T, dt);
    const auto m = compare_densities(avg, fwd.final());
    return {m.l1 <= 0.05, "L1 " + fmt(m.l1) + " over 1000 realizations | tol 0.05"};
}

Outcome mc_vs_pde()
{
    const std::size_t n = 100000;
    const auto heat = models::heat(1.0);
    const GridSpec spec({Axis{-8.0, 0.01, 1600}});
    const auto ens = simulate_ensemble(heat.coeffs, heat.measure, vec(0.0), 1.0, 0.01, kSeed, n, {},
                                       PathStorage::terminal);
    const auto mc = mc_density(ens, spec);
    const auto pde = solve_forward(heat.coeffs, heat.measure, gaussian_density(spec, vec(0.0), 0.02), 1.0, 2.5e-5);
    const auto heat_m = compare_densities(coarsen(mc.density, 10), coarsen(pde.final(), 10));

    const auto jump = models::pure_jump(0.5, 2.0);
    const GridSpec lattice({Axis{-0.25, 0.01, 1000}});
    const auto jens = simulate_ensemble(jump.coeffs, jump.measure, vec(0.0), 1.0, 0.01, kSeed, n, {},
                                        PathStorage::terminal);
    const auto jmc = mc_density(jens, lattice);
    const auto jpde = solve_forward(jump.coeffs, jump.measure, gaussian_density(lattice, vec(0.0), 0.02), 1.0, 1e-4);
    const auto jump_m = compare_densities(coarsen(jmc.density, 50), coarsen(jpde.final(), 50));
    return {heat_m.l1 <= 0.05 && jump_m.l1 <= 0.05,
            "heat L1 " + fmt(heat_m.l1) + " (bins 0.1), pure-jump L1 " + fmt(jump_m.l1) + " (bins 0.5) | tol 0.05"};
}

std::vector<std::string> csv_files(const std::filesystem::path& dir)
{
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.path().extension() == ".csv") out.push_back(std::filesystem::relative(e.path(), dir).string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility(const std::string& scenario_dir)
{
    const auto base = std::filesystem::temp_directory_path() / "gsde_acceptance_repro";
    std::filesystem::remove_all(base);
    std::size_t compared = 0;
    std::vector<std::string> mismatched;
    for (const char* name : {"static.json", "heat.json", "pure-jump-lattice.json", "jump-diffusion.json"}) {
        const auto cfg = load_scenario(std::filesystem::path(scenario_dir) / name);
        RunOptions opts;
        opts.deterministic = true;
        opts.timestamp = false;
        opts.out_root = base / "a";
        const auto ra = run_scenario(cfg, opts);
        opts.out_root = base / "b";
        const auto rb = run_scenario(cfg, opts);
        const auto files_a = csv_files(ra.output_dir);
        const auto files_b = csv_files(rb.output_dir);
        if (files_a != files_b || files_a.empty()) {
            mismatched.push_back(cfg.name + " (file lists differ)");
            continue;
        }
        for (const auto& f : files_a) {
            ++compared;
            if (slurp(ra.output_dir / f) != slurp(rb.output_dir / f)) mismatched.push_back(cfg.name + "/" + f);
        }
    }
    std::filesystem::remove_all(base);
    std::string detail = std::to_string(compared) + " CSV files compared byte-for-byte";
    for (const auto& m : mismatched) detail += "; differs: " + m;
    return {mismatched.empty() && compared > 0, detail};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance suite"};
    int only = 0;
    std::string scenario_dir = GSDE_SCENARIO_DIR;
    app.add_option("--criterion", only, "run a single criterion (1-10)");
    app.add_option("--scenarios", scenario_dir, "directory holding the scenario configs");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {1, "exact conservation of linear first integrals", 10.0, exact_conservation},
        {2, "Ito-Wentzell residual convergence order", 60.0, ito_wentzell_order},
        {3, "determinant identity D*A = 1", 5.0, determinant_identity},
        {4, "Jacobian oracles", 5.0, jacobian_oracles},
        {5, "density SPDE pushforward", 120.0, density_pushforward},
        {6, "forward equation vs heat kernel and Poisson lattice", 120.0, forward_oracles},
        {7, "forward/backward duality", 120.0, duality},
        {8, "mean-field consistency", 600.0, mean_field},
        {9, "Monte Carlo vs forward equation", 120.0, mc_vs_pde},
        {10, "bitwise reproducibility", 600.0, [&] { return reproducibility(scenario_dir); }},
    };

    bool all = true;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = secs < c.budget_s;
        const bool pass = o.pass && in_budget;
        all = all && pass;
        std::printf("criterion %2d [%s] %s | %s | %.2f s (budget %.0f s)\n", c.id, pass ? "PASS" : "FAIL", c.title,
                    o.detail.c_str(), secs, c.budget_s);
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
