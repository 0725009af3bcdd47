#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "gsde/error.hpp"
#include "gsde/ito_wentzell.hpp"
#include "gsde/models.hpp"

using namespace gsde;
using testing::vec;

namespace {

RandomScalarField square()
{
    return RandomScalarField::deterministic([](double, const Vector& x) { return x[0] * x[0]; },
                                            [](double, const Vector& x) { return Vector(2.0 * x); },
                                            [](double, const Vector&) { return Matrix::Constant(1, 1, 2.0); });
}

} // namespace

TEST_CASE("x squared under dx = dw leaves the quadratic-variation defect")
{
    // F(x + Δw) − F(x) − (2xΔw + h) = Δw² − h on every step.
    const auto heat = models::heat(1.0);
    const auto path = simulate_path(heat.coeffs, heat.measure, vec(0.0), 1.0, 1.0 / 64, 3, 0);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < path.increments.cols(); ++i) {
        const double dw = path.increments(0, i);
        expected += dw * dw - path.base_dt;
    }
    const auto report = verify_along_path(square(), DifferentialTriple::zero(), heat.coeffs, heat.measure, path);
    CHECK(report.signed_residual == doctest::Approx(expected).epsilon(1e-9));
    CHECK(report.steps == 64);
}

TEST_CASE("single step increment splits into its named terms")
{
    const auto heat = models::heat(2.0);
    const auto path = simulate_path(heat.coeffs, heat.measure, vec(1.0), 0.1, 0.1, 1, 0);
    const auto noise = step_noise(path, heat.measure, 0);
    const auto terms =
        compose_increment(square(), DifferentialTriple::zero(), heat.coeffs, 0.0, vec(1.0), path.context_at(0), noise);
    CHECK(terms.ito_drift == doctest::Approx(0.5 * 4.0 * 2.0 * 0.1));
    CHECK(terms.ito_diffusion == doctest::Approx(2.0 * 2.0 * noise.dw[0]));
    CHECK(terms.jump_shift == 0.0);
}

TEST_CASE("jump-only dynamics make the increment exact")
{
    const auto jump = models::pure_jump(0.5, 3.0);
    for (std::uint64_t p = 0; p < 20; ++p) {
        const auto path = simulate_path(jump.coeffs, jump.measure, vec(0.2), 1.0, 0.01, 8, p);
        const auto report = verify_along_path(square(), DifferentialTriple::zero(), jump.coeffs, jump.measure, path);
        CHECK(report.residual < 1e-12);
    }
}

TEST_CASE("ladder of a constant drift converges at first order")
{
    const auto m = models::constant_drift(0.7);
    const std::vector<double> dts{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
    const auto ladder = verify_ladder(square(), DifferentialTriple::zero(), m.coeffs, m.measure, vec(0.0), 1.0, dts, 4, 1);
    // Residual is Σ a²h² = a² h T.
    for (const auto& r : ladder.rungs) CHECK(r.mean_residual == doctest::Approx(0.49 * r.dt).epsilon(1e-9));
    CHECK(ladder.order == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit_order recovers exact power laws")
{
    const std::vector<double> dts{0.1, 0.05, 0.025};
    const std::vector<double> vals{3.0 * 0.01, 3.0 * 0.0025, 3.0 * 0.000625};
    CHECK(fit_order(dts, vals) == doctest::Approx(2.0));
    CHECK(std::isnan(fit_order(dts, std::vector<double>{1.0, 0.0, 1.0})));
}

TEST_CASE("noise context must match the field")
{
    const auto heat = models::heat(1.0);
    const auto terminal = simulate_path(heat.coeffs, heat.measure, vec(0.0), 0.1, 0.01, 1, 0, PathStorage::terminal);
    CHECK_THROWS_AS(verify_along_path(square(), DifferentialTriple::zero(), heat.coeffs, heat.measure, terminal),
                    ContextMismatch);
    auto F = square();
    F.noise_dim = 2;
    const auto full = simulate_path(heat.coeffs, heat.measure, vec(0.0), 0.1, 0.01, 1, 0);
    CHECK_THROWS_AS(verify_along_path(F, DifferentialTriple::zero(), heat.coeffs, heat.measure, full), ContextMismatch);
}

TEST_CASE("missing derivatives raise unless finite differences are allowed")
{
    auto F = RandomScalarField::deterministic([](double, const Vector& x) { return std::sin(x[0]); });
    const NoiseContext ctx{0.0, vec(0.0), 0, {}};
    CHECK(F.gradient_at(0.0, vec(0.3), ctx)[0] == doctest::Approx(std::cos(0.3)).epsilon(1e-6));
    CHECK(F.hessian_at(0.0, vec(0.3), ctx)(0, 0) == doctest::Approx(-std::sin(0.3)).epsilon(1e-4));
    F.allow_fd = false;
    CHECK_THROWS_AS(F.gradient_at(0.0, vec(0.3), ctx), DerivativeUnavailable);
}

TEST_CASE("analytic derivatives agree with central differences")
{
    const std::vector<Vector> probes{vec(-1.0), vec(0.5), vec(3.0)};
    const NoiseContext ctx{0.0, vec(0.0), 0, {}};
    CHECK(field_derivative_error(square(), probes, ctx) < 1e-6);
}
