#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "gsde/error.hpp"
#include "gsde/first_integral.hpp"
#include "gsde/models.hpp"

using namespace gsde;
using testing::vec;

TEST_CASE("inverse of a linear jump map")
{
    const auto m = models::linear_jump_1d(0.5);
    const auto sol = inverse_jump_map(m.coeffs, 0.0, vec(3.0), vec(0.5));
    CHECK(sol.y[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(sol.forward_det == doctest::Approx(1.5));
    CHECK(sol.inverse_det == doctest::Approx(1.0 / 1.5));
    CHECK(inverse_det_fd(m.coeffs, 0.0, vec(3.0), vec(0.5)) == doctest::Approx(1.0 / 1.5).epsilon(1e-8));
}

TEST_CASE("inverse of a 2D linear jump map")
{
    Matrix C(2, 2);
    C << 0.3, -0.2, 0.1, 0.4;
    const auto m = models::linear_jump_2d(C);
    Vector x(2);
    x << 1.0, -2.0;
    const auto sol = inverse_jump_map(m.coeffs, 0.0, x, vec(1.0));
    const Vector exact = (Matrix::Identity(2, 2) + C).inverse() * x;
    CHECK((sol.y - exact).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(sol.forward_det * sol.inverse_det == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("non-contracting jump maps are rejected")
{
    const auto m = models::linear_jump_1d(1.5);
    CHECK_THROWS_AS(inverse_jump_map(m.coeffs, 0.0, vec(1.0), vec(1.5)), UniquenessDomainViolated);
    const auto ok = models::linear_jump_1d(0.5);
    const UniquenessDomain box{vec(-1.0), vec(1.0)};
    CHECK(contraction_bound(ok.coeffs, 0.0, vec(0.5), box) == doctest::Approx(0.5));
}

TEST_CASE("triple of the linear first integral")
{
    const auto u = linear_sfi(0.7, 0.4);
    const auto heat = models::heat(0.4);
    const auto triple = sfi_triple(u, heat.coeffs);
    const NoiseContext ctx{0.3, vec(0.1), 0, {}};
    CHECK(triple.Q(0.3, vec(1.0), ctx) == doctest::Approx(0.0));
    CHECK(triple.D(0.3, vec(1.0), ctx, 1)[0] == doctest::Approx(-0.4));
}

TEST_CASE("jump terms of first integrals")
{
    const auto lattice = models::pure_jump(0.5, 2.0);
    const auto u = jump_count_sfi(0.5);
    const auto triple = sfi_triple(u, lattice.coeffs);
    const NoiseContext ctx{0.0, vec(0.0), 2, {2}};
    CHECK(triple.G(0.0, vec(1.0), vec(0.5), ctx) == doctest::Approx(-0.5));

    // G(x) = u(x / (1 + c)) − u(x) for g = c x.
    const auto mul = models::multiplicative_jump(0.5, 2.0);
    const auto um = multiplicative_jump_sfi(0.5);
    const auto tm = sfi_triple(um, mul.coeffs);
    const NoiseContext c1{0.0, vec(0.0), 1, {1}};
    const double expected = um.u(0.0, vec(2.0), c1) - um.u(0.0, vec(3.0), c1);
    CHECK(tm.G(0.0, vec(3.0), vec(0.5), c1) == doctest::Approx(expected));
}

TEST_CASE("linear first integrals are conserved exactly for any coefficients")
{
    for (const auto& [a, b] : {std::pair{0.0, 1.0}, std::pair{-1.3, 0.2}, std::pair{2.0, 3.0}}) {
        CoefficientField f(1, 1);
        f.with_drift([a](double, const Vector&) { return vec(a); });
        f.with_diffusion([b](double, const Vector&) { return Matrix::Constant(1, 1, b); });
        const auto u = linear_sfi(a, b);
        const auto ens = simulate_ensemble(f, MarkMeasure::none(), vec(0.5), 1.0, 1e-2, 4, 50);
        const auto rep = check_conservation(u, sfi_triple(u, f), f, MarkMeasure::none(), ens);
        CHECK(rep.max_residual < 1e-12);
        CHECK(rep.max_increment_residual < 1e-12);
    }
}

TEST_CASE("jump first integrals are conserved exactly")
{
    const auto lattice = models::pure_jump(0.5, 2.0);
    const auto u = jump_count_sfi(0.5);
    const auto ens = simulate_ensemble(lattice.coeffs, lattice.measure, vec(0.0), 1.0, 1e-2, 4, 50);
    const auto rep = check_conservation(u, sfi_triple(u, lattice.coeffs), lattice.coeffs, lattice.measure, ens);
    CHECK(rep.max_residual < 1e-12);
}

TEST_CASE("geometric Brownian first integral drifts only by discretization error")
{
    const auto gbm = models::geometric_brownian(0.1, 0.3);
    const auto u = gbm_sfi(0.1, 0.3);
    const std::vector<double> dts{1.0 / 64, 1.0 / 256};
    const auto ladder =
        conservation_ladder(u, sfi_triple(u, gbm.coeffs), gbm.coeffs, gbm.measure, vec(1.0), 1.0, dts, 200, 2);
    CHECK(ladder.rungs[1].mean_residual < ladder.rungs[0].mean_residual);
    CHECK(ladder.rungs[1].mean_residual < 0.05);
}
