#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "gsde/error.hpp"
#include "gsde/kolmogorov.hpp"
#include "gsde/models.hpp"

using namespace gsde;
using testing::vec;

TEST_CASE("grid geometry")
{
    const auto spec = GridSpec::line(-1.0, 1.0, 0.1);
    CHECK(spec.size() == 21);
    CHECK(spec.axis(0).hi() == doctest::Approx(1.0));
    CHECK(spec.cell_volume() == doctest::Approx(0.1));
    const GridSpec plane({Axis{0.0, 0.5, 4}, Axis{-1.0, 0.25, 3}});
    CHECK(plane.size() == 12);
    CHECK(plane.node(5)[0] == doctest::Approx(0.5));
    CHECK(plane.node(5)[1] == doctest::Approx(-0.75));
    CHECK_THROWS_AS(GridSpec({Axis{0.0, 1.0, 2}}), InvalidGrid);
}

TEST_CASE("initial densities carry unit mass")
{
    const auto spec = GridSpec::line(-3.0, 3.0, 0.01);
    CHECK(gaussian_density(spec, vec(0.0), 0.3).mass() == doctest::Approx(1.0).epsilon(1e-14));
    const auto bump = bump_density(spec, vec(0.0), 1.5);
    CHECK(bump.mass() == doctest::Approx(1.0).epsilon(1e-14));
    // Variance R²/9 of the (1 − r²/R²)³ bump.
    CHECK(bump.integrate([](const Vector& x) { return x[0] * x[0]; }) == doctest::Approx(0.25).epsilon(1e-4));
}

TEST_CASE("coarsening preserves mass")
{
    const auto spec = GridSpec(std::vector<Axis>{Axis{-2.0, 0.01, 400}});
    const auto p = gaussian_density(spec, vec(0.0), 0.4);
    const auto c = coarsen(p, 10);
    CHECK(c.spec.size() == 40);
    CHECK(c.mass() == doctest::Approx(p.mass()).epsilon(1e-14));
    CHECK_THROWS_AS(coarsen(p, 7), InvalidGrid);
}

TEST_CASE("density comparison")
{
    const auto spec = GridSpec::line(-1.0, 1.0, 0.1);
    const auto p = gaussian_density(spec, vec(0.0), 0.3);
    const auto m = compare_densities(p, p);
    CHECK(m.l1 == 0.0);
    CHECK(m.linf == 0.0);
    CHECK(m.mass_err == 0.0);
    CHECK_THROWS_AS(compare_densities(p, gaussian_density(GridSpec::line(-1.0, 1.0, 0.05), vec(0.0), 0.3)),
                    GridMismatch);
}

TEST_CASE("density csv round trip")
{
    const auto spec = GridSpec::line(-1.0, 1.0, 0.1);
    const auto p = gaussian_density(spec, vec(0.2), 0.3);
    std::stringstream io;
    write_density_csv(io, p);
    const auto q = read_density_csv(io);
    CHECK(q.spec.same_as(p.spec));
    CHECK(q.values == p.values);
}

TEST_CASE("forward equation of the heat kernel")
{
    const auto m = models::heat(1.0);
    const auto spec = GridSpec::line(-5.0, 5.0, 0.02);
    const auto p0 = gaussian_density(spec, vec(0.0), 0.3);
    const auto sol = solve_forward(m.coeffs, m.measure, p0, 0.25, 1e-4);
    CHECK(sol.final().mass() == doctest::Approx(1.0).epsilon(1e-12));
    double linf = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) {
        linf = std::max(linf, std::abs(sol.final().values[j] - testing::gaussian_pdf(spec.node(j)[0], 0.0, 0.34)));
    }
    CHECK(linf < 1e-3);
}

TEST_CASE("forward equation of a pure jump process keeps the no-jump mass")
{
    const auto m = models::pure_jump(0.5, 2.0);
    const GridSpec spec({Axis{-0.25, 0.01, 1000}});
    const auto p0 = gaussian_density(spec, vec(0.0), 0.02);
    const auto sol = solve_forward(m.coeffs, m.measure, p0, 0.5, 1e-4);
    const auto masses = lattice_masses(sol.final(), 0.0, 0.5, 8);
    for (int k = 0; k < 8; ++k) CHECK(masses[k] == doctest::Approx(testing::poisson_pmf(k, 1.0)).epsilon(1e-3));
}

TEST_CASE("forward equation in two dimensions conserves mass")
{
    const auto m = models::rotation_noise(0.5);
    const GridSpec spec({Axis{-2.5, 0.05, 101}, Axis{-2.5, 0.05, 101}});
    Vector c(2);
    c << 0.3, 0.0;
    const auto p0 = gaussian_density(spec, c, 0.25);
    const auto sol = solve_forward(m.coeffs, m.measure, p0, 0.05, 2.5e-4);
    CHECK(sol.final().mass() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sol.clipped_mass < 1e-6);
}

TEST_CASE("solvers refuse unstable steps")
{
    const auto m = models::heat(1.0);
    const auto spec = GridSpec::line(-5.0, 5.0, 0.01);
    const auto p0 = gaussian_density(spec, vec(0.0), 0.3);
    CHECK_THROWS_AS(solve_forward(m.coeffs, m.measure, p0, 0.1, 1e-3), StabilityBoundViolated);
    const auto j = models::pure_jump(0.5, 20.0);
    CHECK_THROWS_AS(solve_forward(j.coeffs, j.measure, p0, 0.1, 0.1), StabilityBoundViolated);
}

TEST_CASE("jumps off the grid raise SupportOverflow")
{
    const auto m = models::pure_jump(2.0, 1.0);
    const auto spec = GridSpec::line(-1.0, 1.5, 0.01);
    const auto p0 = gaussian_density(spec, vec(0.0), 0.05);
    CHECK_THROWS_AS(solve_forward(m.coeffs, m.measure, p0, 0.5, 1e-3), SupportOverflow);
}

TEST_CASE("backward equation of the heat kernel")
{
    const auto m = models::heat(1.0);
    const auto spec = GridSpec::line(-5.0, 5.0, 0.02);
    const auto terminal = gaussian_density(spec, vec(0.5), 0.2);
    SolverOptions opts;
    opts.check_support = false;
    const auto sol = solve_backward(m.coeffs, m.measure, terminal, 0.5, 0.25, 1e-4, opts);
    CHECK(sol.times.back() == doctest::Approx(0.25));
    double linf = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) {
        linf = std::max(linf, std::abs(sol.final().values[j] - testing::gaussian_pdf(spec.node(j)[0], 0.5, 0.29)));
    }
    CHECK(linf < 1e-3);
}

TEST_CASE("monte carlo histogram accounts for every sample")
{
    const auto spec = GridSpec::line(-1.0, 1.0, 0.1);
    const std::vector<Vector> pts{vec(0.0), vec(0.04), vec(0.96), vec(3.0)};
    const auto mc = mc_density(pts, spec);
    CHECK(mc.samples == 4);
    CHECK(mc.overflow_count == 1);
    CHECK(mc.density.mass() + mc.overflow_mass == doctest::Approx(1.0));
    CHECK(mc.density.values[10] == doctest::Approx(0.5 / 0.1));
}

TEST_CASE("mean field of a static system is the initial density")
{
    const auto m = models::static_system(1);
    const auto spec = GridSpec::line(-2.0, 2.0, 0.05);
    const auto rho0 = bump_density(spec, vec(0.0), 1.0);
    const auto avg = mean_field_average(m.coeffs, m.measure, rho0, 0.1, 1e-2, 5, 1);
    CHECK(compare_densities(avg, rho0).linf < 1e-15);
}

TEST_CASE("metrics json")
{
    std::ostringstream out;
    write_metrics_json(out, DensityMetrics{0.1, 0.2, 0.0}, 1.5);
    const std::string s = out.str();
    CHECK(s.find("\"l1\"") != std::string::npos);
    CHECK(s.find("\"runtime_s\"") != std::string::npos);
}
