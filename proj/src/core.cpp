#include "bsdelab/core.hpp"

#include "bsdelab/errors.hpp"
#include "bsdelab/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>
#include <set>

namespace bsdelab {

namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double scalar_param(const ParamMap& params, const std::string& key, double fallback) {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    if (it->second.size() != 1) throw ValidationError("parameter '" + key + "' must be a scalar");
    return it->second.front();
}

void reject_unknown(const ParamMap& params, std::initializer_list<const char*> allowed,
                    const std::string& gen) {
    for (const auto& [key, _] : params) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ValidationError("generator '" + gen + "' has no parameter '" + key + "'");
        }
    }
}

void check_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw ValidationError(what + " must be finite");
}

constexpr double kMaxExponent = 50.0;

Generator make_linear(double a, std::vector<double> b, double c) {
    check_finite(a, "linear.a");
    check_finite(c, "linear.c");
    for (double e : b) check_finite(e, "linear.b");
    Generator g;
    g.name = "linear";
    g.lipschitz_z = norm(b);
    g.z_dim = static_cast<int>(b.size());
    const double slope = std::max(a, 0.0);
    g.monotonicity_modulus = [slope](double v) { return slope * v; };
    g.growth_bound = [a](double alpha, double, std::span<const double>) { return std::abs(a) * alpha; };
    g.modulus_note = "linear modulus rho(u) = max(a,0) u satisfies the Osgood condition";
    g.eval = [a, b = std::move(b), c](double, std::span<const double>, double y,
                                      std::span<const double> z) {
        return a * y + dot(b, z) + c;
    };
    return g;
}

}  // namespace

double Generator::at_origin(double t, std::span<const double> x, int d) const {
    std::vector<double> zero(static_cast<std::size_t>(std::max(d, z_dim)), 0.0);
    return eval(t, x, 0.0, zero);
}

double h_entropy(double u, double delta) {
    if (!(delta > 0.0 && delta < 1.0 / std::numbers::e)) {
        throw ValidationError("h_entropy: delta must lie in (0, 1/e)");
    }
    if (!(u >= 0.0)) throw ValidationError("h_entropy: argument must be nonnegative");
    if (u == 0.0) return 0.0;
    if (u <= delta) return -u * std::log(u);
    const double slope = -std::log(delta) - 1.0;
    return slope * (u - delta) - delta * std::log(delta);
}

double q_trunc(double y, double alpha) {
    if (!(alpha >= 0.0)) throw ValidationError("q_trunc: alpha must be nonnegative");
    if (alpha == 0.0) return 0.0;
    return alpha * y / std::max(std::abs(y), alpha);
}

std::vector<std::string> builtin_generator_names() {
    return {"linear", "z_abs", "entropy_stress", "paper_example", "negative_exponential"};
}

Generator builtin_generator(const std::string& name, const ParamMap& params) {
    if (name == "linear") {
        reject_unknown(params, {"a", "b", "c"}, name);
        const auto it = params.find("b");
        std::vector<double> b = it == params.end() ? std::vector<double>{} : it->second;
        return make_linear(scalar_param(params, "a", 0.0), std::move(b), scalar_param(params, "c", 0.0));
    }
    if (name == "negative_exponential") {
        reject_unknown(params, {"rate"}, name);
        Generator g = make_linear(-scalar_param(params, "rate", 1.0), {}, 0.0);
        g.name = name;
        return g;
    }
    if (name == "z_abs") {
        reject_unknown(params, {"scale", "c"}, name);
        const double scale = scalar_param(params, "scale", 1.0);
        const double c = scalar_param(params, "c", 0.0);
        check_finite(scale, "z_abs.scale");
        check_finite(c, "z_abs.c");
        Generator g;
        g.name = name;
        g.lipschitz_z = std::abs(scale);
        g.monotonicity_modulus = [](double) { return 0.0; };
        g.growth_bound = [](double, double, std::span<const double>) { return 0.0; };
        g.eval = [scale, c](double, std::span<const double>, double, std::span<const double> z) {
            return scale * norm(z) + c;
        };
        return g;
    }
    if (name == "entropy_stress" || name == "paper_example") {
        reject_unknown(params, {"delta"}, name);
        const auto it = params.find("delta");
        if (it == params.end()) throw ValidationError(name + " requires parameter 'delta'");
        const double delta = scalar_param(params, "delta", 0.0);
        if (!(delta > 0.0 && delta < 1.0 / std::numbers::e)) {
            throw ValidationError(name + ": delta must lie in (0, 1/e)");
        }
        Generator g;
        g.name = "entropy_stress";
        g.lipschitz_z = 1.0;
        g.state_dependent = true;
        g.deterministic_in_t = true;
        // (y1-y2)(h(|y1|)-h(|y2|)) <= |dy| h(|dy|); as a function of v = dy^2 this is
        // sqrt(v) h(sqrt(v)), which is concave, equals h(v)/2 for v <= delta^2 and is Osgood.
        g.monotonicity_modulus = [delta](double v) {
            const double r = std::sqrt(std::max(v, 0.0));
            return r * h_entropy(r, delta);
        };
        g.growth_bound = [delta](double alpha, double, std::span<const double> x) {
            return std::expm1(std::min(alpha * norm(x), kMaxExponent)) + h_entropy(alpha, delta);
        };
        g.modulus_note = "rho(v) = sqrt(v) h(sqrt(v)); integral of 1/rho diverges at 0+ (Osgood)";
        g.eval = [delta](double, std::span<const double> x, double y, std::span<const double> z) {
            double exponent = y * norm(x);
            if (std::abs(exponent) > kMaxExponent) {
                warn_once("stress-exponent-clamp",
                          "entropy_stress: exponent y*|x| clamped to +-50 (value " +
                              std::to_string(exponent) + ")");
                exponent = std::clamp(exponent, -kMaxExponent, kMaxExponent);
            }
            return -std::exp(exponent) + h_entropy(std::abs(y), delta) + norm(z);
        };
        return g;
    }
    throw ValidationError("unknown generator '" + name + "'");
}

GeneratorCheck validate_generator(const Generator& g, std::size_t samples, std::uint64_t seed,
                                  int state_dim, int z_dim, double slack) {
    require(static_cast<bool>(g.eval), "generator has no evaluation function");
    require(g.lipschitz_z >= 0.0, "generator lipschitz_z must be nonnegative");
    if (g.z_dim > 0) z_dim = g.z_dim;
    GeneratorCheck report;
    report.samples = samples;
    std::vector<double> x(static_cast<std::size_t>(state_dim));
    std::vector<double> z1(static_cast<std::size_t>(z_dim)), z2(z1.size()), zero(z1.size(), 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
        std::uint32_t slot = 0;
        const auto uniform = [&](double lo, double hi) {
            return lo + (hi - lo) * keyed_uniform(seed, static_cast<std::uint32_t>(s), slot++, 11);
        };
        const double t = uniform(0.0, 1.0);
        for (auto& e : x) e = uniform(-2.0, 2.0);
        for (auto& e : z1) e = uniform(-3.0, 3.0);
        for (auto& e : z2) e = uniform(-3.0, 3.0);
        const double y1 = uniform(-3.0, 3.0);
        const double y2 = uniform(-3.0, 3.0);

        const double a = g(t, x, y1, z1);
        const double b = g(t, x, y1, z2);
        double dz = 0.0;
        for (std::size_t k = 0; k < z1.size(); ++k) dz += (z1[k] - z2[k]) * (z1[k] - z2[k]);
        dz = std::sqrt(dz);
        const double z_excess = std::abs(a - b) - g.lipschitz_z * dz;
        report.worst_z_excess = std::max(report.worst_z_excess, z_excess);
        if (z_excess > slack * (1.0 + std::abs(a) + std::abs(b))) report.ok = false;

        if (g.monotonicity_modulus) {
            const double c = g(t, x, y2, z1);
            const double lhs = (y1 - y2) * (a - c);
            const double rhs = g.monotonicity_modulus((y1 - y2) * (y1 - y2));
            const double excess = lhs - rhs;
            report.worst_monotonicity_excess = std::max(report.worst_monotonicity_excess, excess);
            if (excess > slack * (1.0 + std::abs(lhs) + std::abs(rhs))) report.ok = false;
        }
        if (g.growth_bound) {
            const double alpha = uniform(0.0, 3.0);
            const double y = uniform(-alpha, alpha);
            const double base = g(t, x, 0.0, zero);
            const double diff = std::abs(g(t, x, y, zero) - base);
            const double bound = g.growth_bound(alpha, t, x);
            const double excess = diff - bound;
            report.worst_growth_excess = std::max(report.worst_growth_excess, excess);
            if (excess > slack * (1.0 + diff + std::abs(base))) report.ok = false;
        }
    }
    return report;
}

double generator_ordering_violation(const Generator& g1, const Generator& g2, std::size_t samples,
                                    std::uint64_t seed, int state_dim, int z_dim) {
    std::vector<double> x(static_cast<std::size_t>(state_dim)), z(static_cast<std::size_t>(z_dim));
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        std::uint32_t slot = 0;
        const auto uniform = [&](double lo, double hi) {
            return lo + (hi - lo) * keyed_uniform(seed, static_cast<std::uint32_t>(s), slot++, 13);
        };
        const double t = uniform(0.0, 1.0);
        for (auto& e : x) e = uniform(-2.0, 2.0);
        for (auto& e : z) e = uniform(-3.0, 3.0);
        const double y = uniform(-3.0, 3.0);
        worst = std::max(worst, g2(t, x, y, z) - g1(t, x, y, z));
    }
    return worst;
}

void BSDEProblem::validate() const {
    require(static_cast<bool>(generator.eval), "BSDE problem needs a generator");
    require(static_cast<bool>(terminal), "BSDE problem needs a terminal functional");
    require(t_start >= 0.0 && t_start < t_end, "BSDE problem needs 0 <= t_start < t_end");
    require(dimension_d >= 1, "BSDE problem dimension must be positive");
    require(generator.z_dim == 0 || generator.z_dim == dimension_d,
            "generator z dimension does not match the Brownian dimension");
}

void ExperimentConfig::validate() const {
    require(n_paths >= 1, "n_paths must be positive");
    require(n_steps >= 1, "n_steps must be positive");
    require(basis_degree >= 0, "basis degree must be nonnegative");
    require(picard_max >= 1, "picard_max must be positive");
    require(picard_tol > 0.0, "picard_tol must be positive");
    require(threads >= 1, "threads must be positive");
    require(cond_threshold > 1.0, "cond_threshold must exceed 1");
    for (double p : p_norms) require(p >= 1.0 && p <= 2.0, "p_norms must lie in [1, 2]");
}

void warn_once(const std::string& tag, const std::string& message) {
    static std::mutex mutex;
    static std::set<std::string> seen;
    std::lock_guard lock(mutex);
    if (seen.insert(tag).second) std::cerr << "warning: " << message << '\n';
}

}  // namespace bsdelab
