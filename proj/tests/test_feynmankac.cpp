#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsdelab/errors.hpp"
#include "bsdelab/feynmankac.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace bsdelab;

namespace {

constexpr double kPi = std::numbers::pi;

ExperimentConfig mc(std::size_t paths = 20000, std::size_t steps = 50, std::uint64_t seed = 3) {
    ExperimentConfig c;
    c.n_paths = paths;
    c.n_steps = steps;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("Gauss-Hermite expectations of polynomials and cosines") {
    CHECK(gauss_expectation([](double v) { return v * v; }, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(gauss_expectation([](double v) { return std::pow(v, 4); }, 0.0, 1.0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(gauss_expectation([](double v) { return v; }, 1.5, 2.0) == doctest::Approx(1.5).epsilon(1e-12));
    // E[cos(m + s N)] = exp(-s^2 / 2) cos m.
    CHECK(gauss_expectation([](double v) { return std::cos(v); }, 0.4, 0.9) ==
          doctest::Approx(std::exp(-0.405) * std::cos(0.4)).epsilon(1e-12));
}

TEST_CASE("FD: affine terminal values are preserved to machine precision") {
    const PDEProblem p = affine_problem(0.7, -0.2);
    const FDField f = fd_reference(p, kPi / 32, 1e-2);
    for (std::size_t n = 0; n <= f.n_t; n += 10) {
        for (std::size_t j = 0; j < f.n_x; j += 17) CHECK(f.at(n, j) == doctest::Approx(0.7 * f.x(j) - 0.2).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("FD: terminal row is the terminal function exactly") {
    const PDEProblem p = cosine_problem();
    const FDField f = fd_reference(p, kPi / 16, 1e-2);
    for (std::size_t j = 0; j < f.n_x; ++j) CHECK(f.at(f.n_t, j) == std::cos(f.x(j)));
}

TEST_CASE("FD: heat and semilinear cosine problems match the separation oracle") {
    for (double a : {0.0, -1.0}) {
        const PDEProblem p = cosine_problem(a);
        const FDField f = fd_reference(p, kPi / 64, 1e-3);
        for (const auto& [t, x] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.5, 1.0}, {0.2, -0.7}}) {
            const double exact = std::exp((a - 0.5) * (1.0 - t)) * std::cos(x);
            CHECK(std::abs(f.value(t, x) - exact) <= 0.005 * std::abs(exact) + 1e-4);
        }
    }
}

TEST_CASE("FD: drift is transported") {
    PDEProblem p = cosine_problem();
    p.sde = SdeModel::arithmetic(1, 0.6, 1.0);
    const FDField f = fd_reference(p, kPi / 64, 1e-3);
    // u = E[cos(x + mu tau + B_tau)] = exp(-tau / 2) cos(x + mu tau).
    const double exact = std::exp(-0.5) * std::cos(0.3 + 0.6);
    CHECK(f.value(0.0, 0.3) == doctest::Approx(exact).epsilon(0.005));
}

TEST_CASE("FD: explicit schemes are guarded by the CFL condition") {
    const PDEProblem p = cosine_problem();
    try {
        (void)fd_reference(p, kPi / 16, 0.1, 0.0);
        FAIL("expected CFL");
    } catch (const ValidationError& e) {
        CHECK(e.code() == "CFL");
    }
    const FDField f = fd_reference(p, kPi / 16, 0.01, 0.0);
    CHECK(f.value(0.0, 0.0) == doctest::Approx(std::exp(-0.5)).epsilon(0.01));
}

TEST_CASE("FD: domain doubling leaves the probe point unchanged") {
    const PDEProblem p = cosine_problem(-1.0);
    const std::vector<double> ts{0.0, 0.5}, xs{0.0, 1.0};
    CHECK(boundary_influence(p, kPi / 32, 1e-2, 0.5, BoundaryRule::HeatKernel, ts, xs) < 1e-4);
    CHECK(boundary_influence(p, kPi / 32, 1e-2, 0.5, BoundaryRule::Terminal, ts, xs) < 1e-4);
}

TEST_CASE("FD: misconfigured domains are rejected") {
    PDEProblem p = cosine_problem();
    p.x_lo = -0.1;
    p.x_hi = 0.1;
    try {
        (void)fd_reference(p, 0.1, 1e-2);
        FAIL("expected BOUNDARY");
    } catch (const ValidationError& e) {
        CHECK(e.code() == "BOUNDARY");
    }
    const FDField f = fd_reference(cosine_problem(), kPi / 16, 1e-2);
    CHECK_THROWS_AS(f.value(0.0, 100.0), ValidationError);
}

TEST_CASE("growth check blocks terminals above the declared polynomial bound") {
    PDEProblem p = cosine_problem();
    p.terminal = [](std::span<const double> x) { return std::exp(x[0]); };
    try {
        p.validate();
        FAIL("expected GROWTH");
    } catch (const ValidationError& e) {
        CHECK(e.code() == "GROWTH");
    }
    CHECK_THROWS_AS(mc_solution(p, 0.0, 0.0, mc(100)), ValidationError);
}

TEST_CASE("MC: quadratic terminal gives x^2 + T - t") {
    const MCEstimate e = mc_solution(quadratic_problem(), 0.0, 0.0, mc());
    CHECK(std::abs(e.u - 1.0) <= std::max(0.02, 3.0 * e.se));
    const MCEstimate f = mc_solution(quadratic_problem(), 0.5, 1.0, mc());
    CHECK(std::abs(f.u - 1.5) <= std::max(0.03, 3.0 * f.se));
}

TEST_CASE("MC: heat and semilinear cosine problems") {
    for (double a : {0.0, -1.0}) {
        const MCEstimate e = mc_solution(cosine_problem(a), 0.0, 0.0, mc(20000, 100));
        const double exact = std::exp(a - 0.5);
        CHECK(std::abs(e.u - exact) <= std::max(0.02 * exact, 3.0 * e.se));
        CHECK(e.sd > 0.0);
    }
}

TEST_CASE("MC and FD agree point by point") {
    const std::vector<double> ts{0.0, 0.5}, xs{0.0, 0.8};
    for (double a : {0.0, -1.0}) {
        for (const auto& row : mc_vs_fd(cosine_problem(a), ts, xs, mc(20000, 100))) {
            INFO("t=" << row.t << " x=" << row.x);
            CHECK(row.pass);
        }
    }
}

TEST_CASE("flow consistency: re-rooted solves match the conditional values") {
    const auto rows = flow_consistency(quadratic_problem(), 0.0, 0.0, 10, 4, mc(20000, 20));
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        INFO("x=" << r.x);
        CHECK(r.ok);
        CHECK(r.u_rerooted == doctest::Approx(r.x * r.x + 0.5).epsilon(0.05).scale(1.0));
    }
}

TEST_CASE("touch check: classical solution has zero residuals") {
    const PDEProblem p = cosine_problem();
    const TestFunction phi = cosine_exact(0.0, 1.0, 1.0);
    const USource u = usource_from_function(phi.value, 1e-12, "exact");
    const TouchResult r = viscosity_touch_check(p, u, phi, 0.5, 0.3, TouchMode::Sub, mc(5000));
    CHECK(std::abs(r.residual_direct) < 1e-12);
    CHECK(std::abs(r.residual_quotient) <= r.tolerance);
    CHECK(r.pass);
}

TEST_CASE("touch check: quartic bumps keep the sign") {
    for (double a : {0.0, -1.0}) {
        const PDEProblem p = cosine_problem(a);
        const TestFunction exact = cosine_exact(a, 1.0, 1.0);
        const USource u = usource_from_function(exact.value, 1e-12, "exact");
        const TouchResult sub =
            viscosity_touch_check(p, u, add_quartic_bump(exact, 0.2, 1.0), 0.4, 0.2, TouchMode::Sub, mc(5000));
        CHECK(sub.pass);
        CHECK(sub.residual_quotient >= -sub.tolerance);
        const TouchResult super =
            viscosity_touch_check(p, u, add_quartic_bump(exact, -0.5, -1.0), 0.4, -0.5, TouchMode::Super, mc(5000));
        CHECK(super.pass);
        CHECK(super.residual_quotient <= super.tolerance);
    }
}

TEST_CASE("touch check: the wrong bump side fails validation") {
    const PDEProblem p = cosine_problem();
    const TestFunction exact = cosine_exact(0.0, 1.0, 1.0);
    const USource u = usource_from_function(exact.value, 1e-12, "exact");
    try {
        (void)viscosity_touch_check(p, u, add_quartic_bump(exact, 0.2, -1.0), 0.4, 0.2, TouchMode::Sub, mc(500));
        FAIL("expected TOUCH");
    } catch (const ValidationError& e) {
        CHECK(e.code() == "TOUCH");
    }
}

TEST_CASE("touch check with the FD field as u source") {
    const PDEProblem p = cosine_problem(-1.0);
    const USource u = usource_from_field(fd_reference(p, kPi / 64, 1e-3));
    const TestFunction phi = cosine_exact(-1.0, 1.0, 1.0);
    const TouchResult r = viscosity_touch_check(p, u, phi, 0.5, 0.0, TouchMode::Sub, mc(5000));
    // u0 comes from the FD field, so the direct residual is g(u_fd) - g(u_exact).
    CHECK(std::abs(r.residual_direct) < 0.005);
    CHECK(r.agree);
}
