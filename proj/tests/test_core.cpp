#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsdelab/core.hpp"
#include "bsdelab/errors.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace bsdelab;

TEST_CASE("h_entropy matches -u ln u below delta and is continued linearly") {
    const double delta = 0.1;
    CHECK(h_entropy(0.0, delta) == 0.0);
    for (double u : {1e-8, 0.01, 0.05, 0.1}) CHECK(h_entropy(u, delta) == doctest::Approx(-u * std::log(u)).epsilon(1e-14));
    // Beyond delta: tangent line of -u ln u at delta.
    const double slope = -std::log(delta) - 1.0;
    for (double u : {0.2, 1.0, 3.0}) {
        CHECK(h_entropy(u, delta) == doctest::Approx(-delta * std::log(delta) + slope * (u - delta)).epsilon(1e-14));
    }
    // Continuity and matching one-sided derivatives at delta.
    const double e = 1e-7;
    CHECK(h_entropy(delta + e, delta) - h_entropy(delta - e, delta) == doctest::Approx(2 * e * slope).epsilon(1e-4));
    CHECK_THROWS_AS(h_entropy(0.5, 0.5), ValidationError);
    CHECK_THROWS_AS(h_entropy(-1.0, 0.1), ValidationError);
}

TEST_CASE("h_entropy is concave and nondecreasing") {
    const double delta = 0.2;
    double prev = 0.0;
    for (int k = 1; k < 400; ++k) {
        const double u = 0.01 * k;
        const double mid = 0.5 * (h_entropy(u - 0.005, delta) + h_entropy(u + 0.005, delta));
        CHECK(h_entropy(u, delta) >= mid - 1e-15);
        CHECK(h_entropy(u, delta) >= prev);
        prev = h_entropy(u, delta);
    }
}

TEST_CASE("q_trunc is the radial projection onto [-alpha, alpha]") {
    CHECK(q_trunc(0.5, 1.0) == 0.5);
    CHECK(q_trunc(3.0, 1.0) == 1.0);
    CHECK(q_trunc(-3.0, 2.0) == -2.0);
    CHECK(q_trunc(7.0, 0.0) == 0.0);
    CHECK_THROWS_AS(q_trunc(1.0, -1.0), ValidationError);
}

TEST_CASE("built-in generators evaluate their formulas") {
    const std::vector<double> x{0.7};
    const std::vector<double> z{-0.4};
    const Generator lin = builtin_generator("linear", {{"a", {2.0}}, {"b", {0.5}}, {"c", {1.0}}});
    CHECK(lin(0.3, x, 1.5, z) == doctest::Approx(2.0 * 1.5 + 0.5 * -0.4 + 1.0));
    CHECK(lin.lipschitz_z == doctest::Approx(0.5));

    const Generator ne = builtin_generator("negative_exponential", {{"rate", {3.0}}});
    CHECK(ne(0.0, x, 2.0, z) == doctest::Approx(-6.0));

    const Generator za = builtin_generator("z_abs", {{"scale", {2.0}}});
    CHECK(za(0.0, x, 5.0, z) == doctest::Approx(0.8));

    const Generator st = builtin_generator("entropy_stress", {{"delta", {0.1}}});
    const double y = 0.2;
    const double expected = -std::exp(y * 0.7) + (-0.1 * std::log(0.1) + (-std::log(0.1) - 1.0) * (0.2 - 0.1)) + 0.4;
    CHECK(st(0.5, x, y, z) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(st.state_dependent);

    const Generator alias = builtin_generator("paper_example", {{"delta", {0.1}}});
    CHECK(alias(0.5, x, y, z) == st(0.5, x, y, z));
}

TEST_CASE("generator construction rejects bad names and parameters") {
    CHECK_THROWS_AS(builtin_generator("nope"), ValidationError);
    CHECK_THROWS_AS(builtin_generator("linear", {{"q", {1.0}}}), ValidationError);
    CHECK_THROWS_AS(builtin_generator("entropy_stress"), ValidationError);
    CHECK_THROWS_AS(builtin_generator("entropy_stress", {{"delta", {0.5}}}), ValidationError);
    CHECK_THROWS_AS(builtin_generator("linear", {{"a", {1.0, 2.0}}}), ValidationError);
}

TEST_CASE("declared regularity of every built-in survives sampling") {
    for (const auto& [name, params] : std::vector<std::pair<std::string, ParamMap>>{
             {"linear", {{"a", {1.5}}, {"b", {0.3}}}},
             {"linear", {{"a", {-2.0}}}},
             {"negative_exponential", {}},
             {"z_abs", {{"scale", {0.7}}}},
             {"entropy_stress", {{"delta", {0.1}}}},
             {"entropy_stress", {{"delta", {0.3}}}},
         }) {
        const Generator g = builtin_generator(name, params);
        const GeneratorCheck c = validate_generator(g, 20000, 42, 1, 1);
        INFO(name);
        CHECK(c.ok);
    }
}

TEST_CASE("stress modulus: h itself fails the sampled monotonicity check but sqrt(v) h(sqrt(v)) holds") {
    const double delta = 0.1;
    Generator g = builtin_generator("entropy_stress", {{"delta", {delta}}});
    // Independent oracle: (y1-y2)(h(|y1|)-h(|y2|)) with y2 = 0, y1 = u > 1 gives u h(u) > h(u^2).
    const double u = 2.0;
    CHECK(u * h_entropy(u, delta) > h_entropy(u * u, delta));
    // At x = 0 the exponential term is constant, so nothing masks the y-dependence.
    CHECK(validate_generator(g, 20000, 7, 0, 1).ok);
    g.monotonicity_modulus = [delta](double v) { return h_entropy(v, delta); };
    CHECK_FALSE(validate_generator(g, 20000, 7, 0, 1).ok);
}

TEST_CASE("validate_generator catches a wrong Lipschitz constant") {
    Generator g = builtin_generator("z_abs", {{"scale", {2.0}}});
    g.lipschitz_z = 1.0;
    const GeneratorCheck c = validate_generator(g, 2000, 3, 1, 1);
    CHECK_FALSE(c.ok);
    CHECK(c.worst_z_excess > 0.1);
}

TEST_CASE("ordering violation is the largest sampled g2 - g1") {
    const Generator g1 = builtin_generator("linear", {{"c", {0.75}}});
    const Generator g2 = builtin_generator("linear", {{"c", {0.25}}});
    CHECK(generator_ordering_violation(g1, g2, 1000, 1, 1, 1) == 0.0);
    CHECK(generator_ordering_violation(g2, g1, 1000, 1, 1, 1) == doctest::Approx(0.5));
}

TEST_CASE("config and problem validation") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    c.n_paths = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.p_norms = {3.0};
    CHECK_THROWS_AS(c.validate(), ValidationError);

    BSDEProblem p;
    p.generator = builtin_generator("linear");
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.terminal = [](const PathView&) { return 0.0; };
    CHECK_NOTHROW(p.validate());
    p.t_end = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("errors carry kind and code") {
    try {
        throw NumericalError("x", "PICARD");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numerical);
        CHECK(e.code() == "PICARD");
    }
}
