#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "gsde/density_field.hpp"
#include "gsde/error.hpp"
#include "gsde/models.hpp"

using namespace gsde;
using testing::vec;

TEST_CASE("jacobian of a linear drift is exp(alpha t)")
{
    const auto m = models::linear_drift(-0.4);
    const auto path = simulate_path(m.coeffs, m.measure, vec(1.0), 2.0, 1e-3, 1, 0);
    const auto jac = evolve_jacobian(m.coeffs, m.measure, path);
    CHECK(jac.final_value() == doctest::Approx(std::exp(-0.8)).epsilon(1e-10));
    CHECK(jac.log_consistency() < 1e-12);
}

TEST_CASE("rotation noise jacobian matches the Euler flow determinant")
{
    // K = σ² and div b = 0, so J = e^{σ² t}; the Euler map multiplies by
    // det(I + σRΔw) = 1 + σ²Δw² per step.
    const double sigma = 0.5;
    const auto m = models::rotation_noise(sigma);
    Vector x0(2);
    x0 << 1.0, 0.0;
    const auto path = simulate_path(m.coeffs, m.measure, x0, 1.0, 1e-4, 6, 0);
    double euler = 1.0;
    for (Eigen::Index i = 0; i < path.increments.cols(); ++i) {
        euler *= 1.0 + sigma * sigma * path.increments(0, i) * path.increments(0, i);
    }
    const double J = evolve_jacobian(m.coeffs, m.measure, path).final_value();
    CHECK(J == doctest::Approx(std::exp(sigma * sigma)).epsilon(1e-10));
    CHECK(std::abs(J - euler) / J < 1e-2);
}

TEST_CASE("jump factors multiply the jacobian")
{
    const auto m = models::multiplicative_jump(-0.5, 4.0);
    for (std::uint64_t p = 0; p < 20; ++p) {
        const auto path = simulate_path(m.coeffs, m.measure, vec(1.0), 1.0, 1e-2, 2, p);
        const auto jac = evolve_jacobian(m.coeffs, m.measure, path);
        CHECK(jac.final_value() == std::ldexp(1.0, -static_cast<int>(path.jumps.size())));
        CHECK(jac.jump_factors.size() == path.jumps.size());
    }
}

TEST_CASE("jump flows that fold space are rejected")
{
    CHECK_THROWS_AS(models::multiplicative_jump(-1.5, 5.0), InvalidArgument);
    // Built by hand, past the builder's guard: x -> -x/2 reverses orientation.
    CoefficientField f(1, 1);
    f.with_jump([](double, const Vector& x, const Vector&) -> Vector { return -1.5 * x; }, true,
                [](double, const Vector&, const Vector&) { return Matrix::Constant(1, 1, -1.5); });
    const auto measure = MarkMeasure::single(vec(-1.5), 5.0);
    const auto path = simulate_path(f, measure, vec(1.0), 1.0, 1e-2, 2, 0);
    REQUIRE(!path.jumps.empty());
    CHECK_THROWS_AS(evolve_jacobian(f, measure, path), NonInvertibleJumpFlow);
}

TEST_CASE("density of a static system does not change")
{
    const auto m = models::static_system(1);
    const auto spec = GridSpec::line(-2.0, 2.0, 0.01);
    const auto rho0 = bump_density(spec, vec(0.1), 0.5);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.1), 0.5, 1e-3, 1, 0);
    const auto dens = evolve_density_field(m.coeffs, m.measure, path, rho0);
    CHECK(dens.final().values == rho0.values);
    const auto jac = evolve_jacobian(m.coeffs, m.measure, path);
    CHECK(check_density_invariant(jac, dens, path, rho0).max_rel_dev == 0.0);
}

TEST_CASE("heat SPDE conserves mass and transports the density")
{
    const auto m = models::heat(1.0);
    const auto spec = GridSpec::line(-4.0, 4.0, 0.02);
    const auto rho0 = gaussian_density(spec, vec(0.0), 0.5);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.0), 0.1, 1e-4, 3, 0);
    DensityOptions opts;
    opts.snapshot_every = 100;
    const auto dens = evolve_density_field(m.coeffs, m.measure, path, rho0, opts);
    for (const double mass : dens.snapshot_masses) CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    const double w = path.wiener(0, path.wiener.cols() - 1);
    const Vector moved = vec(w);
    CHECK(dens.final().integrate([](const Vector& x) { return x[0]; }) == doctest::Approx(w).epsilon(1e-3));
    CHECK(dens.final().interpolate(moved) == doctest::Approx(rho0.interpolate(vec(0.0))).epsilon(2e-2));
}

TEST_CASE("explicit steps beyond the stability bound are refused")
{
    const auto m = models::heat(1.0);
    const auto spec = GridSpec::line(-4.0, 4.0, 0.01);
    const auto rho0 = bump_density(spec, vec(0.0), 1.0);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.0), 0.1, 1e-3, 3, 0);
    CHECK_THROWS_AS(evolve_density_field(m.coeffs, m.measure, path, rho0), StabilityBoundViolated);
}

TEST_CASE("density that reaches the boundary raises SupportOverflow")
{
    const auto m = models::constant_drift(5.0);
    const auto spec = GridSpec::line(-1.0, 1.0, 0.01);
    const auto rho0 = bump_density(spec, vec(0.0), 0.5);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.0), 0.5, 5e-4, 3, 0);
    CHECK_THROWS_AS(evolve_density_field(m.coeffs, m.measure, path, rho0), SupportOverflow);
}

TEST_CASE("weak form matches the flow for a static system")
{
    const auto m = models::static_system(1);
    const auto spec = GridSpec::line(-2.0, 2.0, 0.05);
    const auto rho0 = bump_density(spec, vec(0.0), 1.0);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.0), 0.2, 1e-2, 1, 0);
    const auto dens = evolve_density_field(m.coeffs, m.measure, path, rho0);
    const auto flow = density_flow(m.coeffs, m.measure, rho0, 0.2, 1e-2, 1, 0);
    const auto rep = check_normalization(dens, default_test_functions(), flow, rho0);
    REQUIRE(rep.rows.size() == 4);
    for (const auto& row : rep.rows) CHECK(row.abs_diff < 1e-12);
}

TEST_CASE("weak form matches the flow under noise")
{
    const auto m = models::ornstein_uhlenbeck(0.5, 0.5);
    const auto spec = GridSpec::line(-4.0, 4.0, 0.02);
    const auto rho0 = gaussian_density(spec, vec(0.0), 0.5);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.0), 0.2, 2e-4, 5, 0);
    const auto dens = evolve_density_field(m.coeffs, m.measure, path, rho0);
    const auto flow = density_flow(m.coeffs, m.measure, rho0, 0.2, 2e-4, 5, 0);
    const auto rep = check_normalization(dens, default_test_functions(), flow, rho0);
    CHECK(std::abs(rep.mass_error) < 1e-8);
    for (const auto& row : rep.rows) CHECK(row.abs_diff < 5e-3);
}
