#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsdelab/regression.hpp"
#include "bsdelab/rng.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace bsdelab;

TEST_CASE("total-degree monomial count is C(n + p, p)") {
    CHECK(monomial_exponents(1, 3).size() == 4);
    CHECK(monomial_exponents(2, 3).size() == 10);
    CHECK(monomial_exponents(3, 2).size() == 10);
    CHECK(monomial_exponents(0, 4).size() == 1);
    std::set<std::vector<int>> unique;
    for (const auto& e : monomial_exponents(2, 3)) {
        int total = 0;
        for (int p : e) total += p;
        CHECK(total <= 3);
        unique.insert(e);
    }
    CHECK(unique.size() == 10);
}

TEST_CASE("a polynomial target of the basis degree is recovered exactly") {
    const std::size_t n = 3000;
    std::vector<double> feat(2 * n), target(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = -2.0 + 4.0 * keyed_uniform(1, static_cast<std::uint32_t>(m), 0, 0);
        const double b = 5.0 + 0.1 * keyed_uniform(1, static_cast<std::uint32_t>(m), 1, 0);
        feat[2 * m] = a;
        feat[2 * m + 1] = b;
        target[m] = 1.0 - 2.0 * a + 0.5 * a * b - 3.0 * a * a * a + b * b;
    }
    const StepRegression reg(feat, n, 2, 3, 1e12, 1);
    CHECK(reg.degree() == 3);
    const Eigen::MatrixXd c = reg.fit(target, 1);
    std::vector<double> fitted(n);
    reg.predict_all(c, 0, fitted);
    double worst = 0.0;
    for (std::size_t m = 0; m < n; ++m) worst = std::max(worst, std::abs(fitted[m] - target[m]));
    CHECK(worst < 1e-8);
    // The descriptor evaluates the same basis on a fresh raw point.
    const std::vector<double> p{0.3, 5.05};
    const double direct = reg.basis().evaluate(p).dot(c.col(0));
    CHECK(direct == doctest::Approx(1.0 - 0.6 + 0.5 * 0.3 * 5.05 - 3.0 * 0.027 + 5.05 * 5.05).epsilon(1e-9));
}

TEST_CASE("constant features are dropped and reduce to the sample mean") {
    const std::size_t n = 100;
    std::vector<double> feat(n, 2.5), target(n);
    double mean = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        target[m] = std::sin(static_cast<double>(m));
        mean += target[m] / n;
    }
    const StepRegression reg(feat, n, 1, 3, 1e10, 1);
    CHECK(reg.basis_size() == 1);
    const Eigen::MatrixXd c = reg.fit(target, 1);
    std::vector<double> fitted(n);
    reg.predict_all(c, 0, fitted);
    CHECK(fitted[7] == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("ill-conditioned designs lower the degree") {
    const std::size_t n = 50;
    std::vector<double> feat(n);
    for (std::size_t m = 0; m < n; ++m) feat[m] = m < 49 ? 0.0 : 1.0;  // one outlier: near-singular high powers
    const StepRegression strict(feat, n, 1, 6, 10.0, 1);
    CHECK(strict.degree() < 6);
    CHECK(strict.condition_number() <= 10.0);
    CHECK(strict.requested_degree() == 6);
}

TEST_CASE("fits several targets at once") {
    const std::size_t n = 500;
    std::vector<double> feat(n), targets(2 * n);
    for (std::size_t m = 0; m < n; ++m) {
        feat[m] = static_cast<double>(m) / n;
        targets[m] = 2.0 * feat[m];
        targets[n + m] = 1.0 - feat[m] * feat[m];
    }
    const StepRegression reg(feat, n, 1, 2, 1e12, 2);
    const Eigen::MatrixXd c = reg.fit(targets, 2);
    std::vector<double> f0(n), f1(n);
    reg.predict_all(c, 0, f0);
    reg.predict_all(c, 1, f1);
    CHECK(f0[100] == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(f1[250] == doctest::Approx(0.75).epsilon(1e-10));
}
