#include "bsdelab/envelope.hpp"

#include "bsdelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bsdelab {

namespace {

constexpr int kGrowthGrid = 2048;
constexpr double kMaxGridPoints = 5e7;

double truncated(const Generator& g, double alpha, double t, std::span<const double> x, double u,
                 std::span<const double> zero) {
    return g(t, x, q_trunc(u, alpha), zero);
}

/// Largest finite-difference slope of y -> g(t,x,y,0) on [-α, α].
double local_lipschitz(const Generator& g, double alpha, double t, std::span<const double> x,
                       std::span<const double> zero) {
    if (alpha == 0.0) return 0.0;
    const double h = 2.0 * alpha / (kGrowthGrid - 1);
    double worst = 0.0;
    double prev = g(t, x, -alpha, zero);
    for (int k = 1; k < kGrowthGrid; ++k) {
        const double cur = g(t, x, -alpha + k * h, zero);
        worst = std::max(worst, std::abs(cur - prev) / h);
        prev = cur;
    }
    return worst;
}

}  // namespace

double growth_estimate(const Generator& g, double alpha, double t, std::span<const double> x, int d,
                       bool* declared) {
    require(alpha >= 0.0, "envelope: alpha must be nonnegative");
    if (g.growth_bound) {
        if (declared) *declared = true;
        return g.growth_bound(alpha, t, x);
    }
    if (declared) *declared = false;
    const std::vector<double> zero(static_cast<std::size_t>(std::max(d, g.z_dim)), 0.0);
    const double base = g(t, x, 0.0, zero);
    double sup = 0.0;
    for (int k = 0; k < kGrowthGrid; ++k) {
        const double y = -alpha + 2.0 * alpha * k / (kGrowthGrid - 1);
        sup = std::max(sup, std::abs(g(t, x, y, zero) - base));
    }
    if (!std::isfinite(sup)) throw NumericalError("envelope: empirical growth bound is not finite", "NAN");
    return sup;
}

EnvelopeResult envelopes(const Generator& g, double alpha, int n, double t, std::span<const double> x,
                         double u_resolution, int d) {
    require(alpha >= 0.0, "envelope: alpha must be nonnegative");
    require(n >= 1, "envelope: n must be a positive integer");
    require(u_resolution > 0.0, "envelope: u_resolution must be positive");
    const std::vector<double> zero(static_cast<std::size_t>(std::max(d, g.z_dim)), 0.0);

    EnvelopeResult r;
    r.n = n;
    r.alpha = alpha;
    r.g0 = g(t, x, 0.0, zero);
    r.psi_hat = growth_estimate(g, alpha, t, x, d, &r.psi_declared);
    r.search_bound = (2.0 * r.psi_hat + 2.0 * std::abs(r.g0) + 1.0) / n;
    // Beyond |u| = α the truncated term is constant and the penalty only grows,
    // so the grid never needs to extend past α (plus one cell).
    const double reach = std::min(r.search_bound, alpha + u_resolution);
    const double cells = std::ceil(reach / u_resolution);
    if (2.0 * cells + 1.0 > kMaxGridPoints) {
        throw ValidationError("envelope: u_resolution too fine for the search interval (" +
                              std::to_string(2.0 * cells + 1.0) + " points)");
    }
    const auto k_max = static_cast<long long>(cells);

    r.value_lower = r.g0;
    r.value_upper = r.g0;
    for (long long k = -k_max; k <= k_max; ++k) {
        const double u = std::clamp(static_cast<double>(k) * u_resolution, -reach, reach);
        const double gu = truncated(g, alpha, t, x, u, zero);
        if (!std::isfinite(gu)) {
            throw NumericalError("envelope: non-finite objective at u = " + std::to_string(u), "NAN");
        }
        const double low = gu + n * std::abs(u);
        const double high = gu - n * std::abs(u);
        if (low < r.value_lower) {
            r.value_lower = low;
            r.argmin_u = u;
        }
        if (high > r.value_upper) {
            r.value_upper = high;
            r.argmax_u = u;
        }
    }
    return r;
}

EnvelopeResult lower_envelope(const Generator& g, double alpha, int n, double t, std::span<const double> x,
                              double u_resolution, int d) {
    return envelopes(g, alpha, n, t, x, u_resolution, d);
}

EnvelopeResult upper_envelope(const Generator& g, double alpha, int n, double t, std::span<const double> x,
                              double u_resolution, int d) {
    return envelopes(g, alpha, n, t, x, u_resolution, d);
}

SandwichReport sandwich_check(const Generator& g, const EnvelopeResult& env, double t, std::span<const double> x,
                              std::span<const double> y_samples, double u_resolution, int d) {
    const std::vector<double> zero(static_cast<std::size_t>(std::max(d, g.z_dim)), 0.0);
    SandwichReport report;
    report.samples = y_samples.size();
    report.tolerance = 10.0 * u_resolution * (env.n + local_lipschitz(g, env.alpha, t, x, zero));
    report.worst_violation = -std::numeric_limits<double>::infinity();
    for (double y : y_samples) {
        const double lhs = truncated(g, env.alpha, t, x, y, zero) - env.g0;
        const double below = (env.value_lower - env.g0 - env.n * std::abs(y)) - lhs;
        const double above = lhs - (env.value_upper - env.g0 + env.n * std::abs(y));
        const double excess = std::max(below, above);
        report.worst_violation = std::max(report.worst_violation, excess);
        if (excess > report.tolerance) ++report.violations;
    }
    if (y_samples.empty()) report.worst_violation = 0.0;
    report.ok = report.violations == 0;
    return report;
}

ConvergenceCurve convergence_curve(const Generator& g, double alpha, double t, std::span<const double> x,
                                   std::span<const int> n_list, double u_resolution, int d) {
    require(!n_list.empty(), "convergence_curve: empty n list");
    for (std::size_t k = 1; k < n_list.size(); ++k) {
        require(n_list[k] > n_list[k - 1], "convergence_curve: n list must be increasing");
    }
    const std::vector<double> zero(static_cast<std::size_t>(std::max(d, g.z_dim)), 0.0);
    ConvergenceCurve curve;
    curve.alpha = alpha;
    curve.t = t;
    const double lip = local_lipschitz(g, alpha, t, x, zero);
    for (int n : n_list) {
        const EnvelopeResult env = envelopes(g, alpha, n, t, x, u_resolution, d);
        curve.g0 = env.g0;
        ConvergenceRow row;
        row.n = n;
        row.lower = env.value_lower;
        row.upper = env.value_upper;
        row.combined = std::abs(env.value_lower - env.g0) + std::abs(env.value_upper - env.g0);
        row.bound = 2.0 * env.psi_hat + 4.0 * std::abs(env.g0);
        row.argmin_u = env.argmin_u;
        curve.rows.push_back(row);
    }
    curve.tolerance = 2.0 * u_resolution * (n_list.back() + lip) + 1e-12;
    for (std::size_t k = 0; k < curve.rows.size(); ++k) {
        const auto& row = curve.rows[k];
        if (row.combined > row.bound + curve.tolerance) curve.bound_respected = false;
        if (k == 0) continue;
        const auto& prev = curve.rows[k - 1];
        if (row.lower < prev.lower - curve.tolerance) curve.lower_monotone = false;
        if (row.upper > prev.upper + curve.tolerance) curve.upper_monotone = false;
        if (row.combined > prev.combined + 2.0 * curve.tolerance) curve.combined_monotone = false;
    }
    return curve;
}

}  // namespace bsdelab
