#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "gsde/error.hpp"
#include "gsde/models.hpp"
#include "gsde/philox.hpp"
#include "gsde/sample_path.hpp"

using namespace gsde;
using testing::vec;

TEST_CASE("philox known-answer vectors")
{
    using C = Philox4x32::Counter;
    CHECK(Philox4x32::apply({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::apply({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u})
          == C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::apply({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u})
          == C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("counter draws are addressable and stay in the open unit interval")
{
    const CounterRng a(7, 3), b(7, 3), c(7, 4);
    CHECK(a.uniforms(10, Channel::wiener, 0, 0) == b.uniforms(10, Channel::wiener, 0, 0));
    CHECK(a.uniforms(10, Channel::wiener, 0, 0) != c.uniforms(10, Channel::wiener, 0, 0));
    CHECK(a.uniforms(10, Channel::wiener, 0, 0) != a.uniforms(10, Channel::jump_time, 0, 0));
    for (std::uint32_t i = 0; i < 1000; ++i) {
        for (const double u : a.uniforms(i, Channel::user, 0, 0)) {
            CHECK(u > 0.0);
            CHECK(u < 1.0);
        }
    }
}

TEST_CASE("static system paths never move")
{
    const auto m = models::static_system(1);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.3), 1.0, 0.01, 1, 0);
    CHECK(path.steps() == 100);
    CHECK((path.states.array() == 0.3).all());
}

TEST_CASE("constant drift paths are exact")
{
    const auto m = models::constant_drift(0.7);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.0), 1.0, 1e-3, 1, 0);
    CHECK(path.final_state()[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(path.final_time() == 1.0);
}

TEST_CASE("Wiener increments have the right moments")
{
    const auto m = models::heat(1.0);
    const std::size_t n = 20000;
    const auto ens = simulate_ensemble(m.coeffs, m.measure, vec(0.0), 1.0, 0.05, 11, n, {}, PathStorage::terminal);
    const auto mom = terminal_moments(ens);
    const double se = 1.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mom.mean[0]) < 4.0 * se);
    CHECK(std::abs(mom.variance[0] - 1.0) < 4.0 * std::sqrt(2.0) * se);
}

TEST_CASE("jump counts follow the Poisson law")
{
    const auto m = models::pure_jump(0.5, 2.0);
    const std::size_t n = 20000;
    const auto ens = simulate_ensemble(m.coeffs, m.measure, vec(0.0), 1.0, 0.01, 5, n, {}, PathStorage::terminal);
    const auto counts = jump_counts(ens);
    constexpr int kBins = 9; // 0..7 and 8+
    std::array<double, kBins> observed{};
    for (const auto k : counts) observed[std::min<std::size_t>(k, kBins - 1)] += 1.0;
    double chi2 = 0.0, tail = 1.0;
    for (int k = 0; k < kBins; ++k) {
        const double p = k < kBins - 1 ? testing::poisson_pmf(k, 2.0) : tail;
        tail -= p;
        const double expected = p * static_cast<double>(n);
        chi2 += (observed[k] - expected) * (observed[k] - expected) / expected;
    }
    // 99.9% quantile of chi-square with 8 degrees of freedom.
    CHECK(chi2 < 26.12);
    // Jumps displace the state by exactly h each.
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(ens.paths[i].final_state()[0] == doctest::Approx(0.5 * static_cast<double>(counts[i])));
    }
}

TEST_CASE("ensembles are reproducible across thread counts")
{
    const auto m = models::jump_diffusion(0.5, 0.5, 0.2, 1.0);
    const auto a = simulate_ensemble(m.coeffs, m.measure, vec(1.0), 1.0, 0.01, 42, 64, {1, true});
    const auto b = simulate_ensemble(m.coeffs, m.measure, vec(1.0), 1.0, 0.01, 42, 64, {0, true});
    for (std::size_t i = 0; i < 64; ++i) CHECK((a.paths[i].states.array() == b.paths[i].states.array()).all());
    const auto ta = terminal_moments(a, {1, true});
    const auto tb = terminal_moments(b, {0, true});
    CHECK(ta.mean[0] == tb.mean[0]);
    CHECK(ta.variance[0] == tb.variance[0]);
}

TEST_CASE("terminal storage keeps the final state of full storage")
{
    const auto m = models::jump_diffusion(0.5, 0.5, 0.2, 3.0);
    for (std::uint64_t p = 0; p < 10; ++p) {
        const auto full = simulate_path(m.coeffs, m.measure, vec(1.0), 1.0, 0.01, 9, p);
        const auto term = simulate_path(m.coeffs, m.measure, vec(1.0), 1.0, 0.01, 9, p, PathStorage::terminal);
        CHECK(full.final_state()[0] == term.final_state()[0]);
    }
}

TEST_CASE("euler increments reproduce the stored path")
{
    const auto m = models::jump_diffusion(0.5, 0.5, 0.2, 3.0);
    const auto path = simulate_path(m.coeffs, m.measure, vec(1.0), 1.0, 0.01, 3, 1);
    REQUIRE(!path.jumps.empty());
    double worst = 0.0;
    for (std::size_t i = 0; i < path.steps(); ++i) {
        const Vector d = euler_increment(m.coeffs, m.measure, path, i);
        worst = std::max(worst, std::abs(d[0] - (path.state(i + 1)[0] - path.state(i)[0])));
    }
    CHECK(worst < 1e-14);
}

TEST_CASE("centered drift subtracts the mean jump")
{
    const auto m = models::pure_jump(0.5, 2.0);
    const auto centered = centered_drift(m.coeffs, m.measure);
    CHECK(centered.drift(0.0, vec(3.0))[0] == doctest::Approx(-1.0));
    const auto mj = models::multiplicative_jump(0.5, 2.0);
    CHECK(centered_drift(mj.coeffs, mj.measure).drift(0.0, vec(2.0))[0] == doctest::Approx(-2.0));
}

TEST_CASE("built-in models declare correct derivatives")
{
    const std::vector<Vector> probes{vec(-1.3), vec(0.2), vec(2.1)};
    for (const auto& m : {models::ornstein_uhlenbeck(1.0, 0.5), models::geometric_brownian(0.1, 0.3),
                          models::multiplicative_jump(0.5, 1.0), models::jump_diffusion(0.5, 0.5, 0.2, 1.0)}) {
        const auto report = check_field(m.coeffs, m.measure, probes);
        CHECK(report.ok());
    }
}

TEST_CASE("path csv has one row per node")
{
    const auto m = models::pure_jump(0.5, 5.0);
    const auto path = simulate_path(m.coeffs, m.measure, vec(0.0), 1.0, 0.1, 2, 0);
    std::ostringstream out;
    write_path_csv(out, path);
    const std::string text = out.str();
    CHECK(text.rfind("t,x_1,jump_flag,mark_index\r\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == path.times.size() + 1);
}
