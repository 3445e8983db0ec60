#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsdelab/envelope.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

using namespace bsdelab;

namespace {

/// Independent brute force: min / max of g(q_α(u)) ± n|u| over a wide uniform grid.
std::pair<double, double> brute_envelopes(const Generator& g, double alpha, int n, double t, const std::vector<double>& x,
                                          double reach, double step) {
    const std::vector<double> zero{0.0};
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double u = -reach; u <= reach + 1e-12; u += step) {
        const double clipped = std::clamp(u, -alpha, alpha);
        const double v = g(t, x, clipped, zero);
        lo = std::min(lo, v + n * std::abs(u));
        hi = std::max(hi, v - n * std::abs(u));
    }
    return {lo, hi};
}

}  // namespace

TEST_CASE("linear generator: envelopes equal min(0, (n - k) alpha) and max(0, (k - n) alpha)") {
    const std::vector<double> x{0.0};
    for (double k : {2.0, 3.0}) {
        const Generator g = builtin_generator("linear", {{"a", {-k}}});
        for (int n : {1, 2, 3, 4, 8}) {
            for (double alpha : {0.5, 1.0, 2.0}) {
                const EnvelopeResult e = envelopes(g, alpha, n, 0.0, x, 1e-4);
                CHECK(e.value_lower == doctest::Approx(std::min(0.0, (n - k) * alpha)).epsilon(1e-3).scale(1.0));
                CHECK(e.value_upper == doctest::Approx(std::max(0.0, (k - n) * alpha)).epsilon(1e-3).scale(1.0));
            }
        }
    }
}

TEST_CASE("lower and upper entry points return the same pass") {
    const std::vector<double> x{0.0};
    const Generator g = builtin_generator("linear", {{"a", {-2.0}}});
    CHECK(lower_envelope(g, 1.0, 1, 0.0, x, 1e-4).value_lower == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(upper_envelope(g, 1.0, 1, 0.0, x, 1e-4).value_upper == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("stress generator envelopes agree with a brute-force grid") {
    const Generator g = builtin_generator("entropy_stress", {{"delta", {0.1}}});
    const std::vector<double> x{0.8};
    for (double alpha : {0.5, 1.5}) {
        for (int n : {1, 3, 10}) {
            const EnvelopeResult e = envelopes(g, alpha, n, 0.2, x, 1e-4);
            const auto [lo, hi] = brute_envelopes(g, alpha, n, 0.2, x, alpha + 3.0, 3e-5);
            CHECK(e.value_lower == doctest::Approx(lo).epsilon(1e-3).scale(1.0));
            CHECK(e.value_upper == doctest::Approx(hi).epsilon(1e-3).scale(1.0));
        }
    }
}

TEST_CASE("sandwich inequalities hold on random y") {
    const Generator g = builtin_generator("entropy_stress", {{"delta", {0.2}}});
    const std::vector<double> x{-0.6};
    std::vector<double> ys(200);
    for (std::size_t s = 0; s < ys.size(); ++s) ys[s] = -4.0 + 8.0 * keyed_uniform(9, static_cast<std::uint32_t>(s), 0, 1);
    for (int n : {1, 2, 5, 20}) {
        const EnvelopeResult e = envelopes(g, 1.2, n, 0.0, x, 1e-4);
        const SandwichReport r = sandwich_check(g, e, 0.0, x, ys, 1e-4);
        CHECK(r.ok);
        CHECK(r.violations == 0);
    }
}

TEST_CASE("sandwich check detects a corrupted envelope") {
    const Generator g = builtin_generator("linear", {{"a", {-2.0}}});
    const std::vector<double> x{0.0};
    EnvelopeResult e = envelopes(g, 1.0, 1, 0.0, x, 1e-4);
    e.value_lower += 0.5;
    const std::vector<double> ys{1.0};
    CHECK_FALSE(sandwich_check(g, e, 0.0, x, ys, 1e-4).ok);
}

TEST_CASE("growth estimate: declared bound and empirical sup coincide for linear") {
    Generator g = builtin_generator("linear", {{"a", {-2.0}}});
    const std::vector<double> x{0.0};
    bool declared = false;
    CHECK(growth_estimate(g, 1.5, 0.0, x, 1, &declared) == doctest::Approx(3.0));
    CHECK(declared);
    g.growth_bound = nullptr;
    CHECK(growth_estimate(g, 1.5, 0.0, x, 1, &declared) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK_FALSE(declared);
}

TEST_CASE("convergence curve is monotone and within the bound") {
    const std::vector<int> ns{1, 2, 4, 8, 16, 32};
    for (const Generator& g : {builtin_generator("linear", {{"a", {-2.0}}}),
                               builtin_generator("entropy_stress", {{"delta", {0.1}}})}) {
        const std::vector<double> x{0.5};
        const ConvergenceCurve c = convergence_curve(g, 1.0, 0.0, x, ns, 1e-4);
        CHECK(c.lower_monotone);
        CHECK(c.upper_monotone);
        CHECK(c.combined_monotone);
        CHECK(c.bound_respected);
        CHECK(c.rows.back().combined <= c.rows.front().combined + c.tolerance);
    }
}

TEST_CASE("envelope input validation") {
    const Generator g = builtin_generator("linear", {{"a", {-2.0}}});
    const std::vector<double> x{0.0};
    CHECK_THROWS_AS(envelopes(g, -1.0, 1, 0.0, x, 1e-4), ValidationError);
    CHECK_THROWS_AS(envelopes(g, 1.0, 0, 0.0, x, 1e-4), ValidationError);
    CHECK_THROWS_AS(envelopes(g, 1.0, 1, 0.0, x, 1e-12), ValidationError);
    const std::vector<int> bad{4, 2};
    CHECK_THROWS_AS(convergence_curve(g, 1.0, 0.0, x, bad, 1e-4), ValidationError);
}
