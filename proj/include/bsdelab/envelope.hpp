#pragma once

#include "bsdelab/core.hpp"

#include <span>
#include <vector>

namespace bsdelab {

/// Inf-/sup-convolution of the truncated generator y -> g(t, x, q_α(y), 0)
/// with the penalty n|u|, evaluated by grid search.
struct EnvelopeResult {
    int n = 0;
    double alpha = 0.0;
    double value_lower = 0.0;
    double value_upper = 0.0;
    double argmin_u = 0.0;  // minimizer of the lower objective
    double argmax_u = 0.0;  // maximizer of the upper objective
    double search_bound = 0.0;
    double g0 = 0.0;        // g(t, x, 0, 0)
    double psi_hat = 0.0;   // declared or empirical growth bound at α
    bool psi_declared = false;
};

/// ψ̂_α: the declared growth bound, else max |g(t,x,y,0) - g(t,x,0,0)| over a 2048-point y-grid on [-α, α].
double growth_estimate(const Generator& g, double alpha, double t, std::span<const double> x, int d,
                       bool* declared = nullptr);

/// inf_u { g(t, x, q_α(u), 0) + n|u| } over u in [-U, U], U = (2ψ̂ + 2|g0| + 1)/n.
EnvelopeResult lower_envelope(const Generator& g, double alpha, int n, double t, std::span<const double> x,
                              double u_resolution, int d = 1);

/// sup_u { g(t, x, q_α(u), 0) - n|u| } over the same interval.
EnvelopeResult upper_envelope(const Generator& g, double alpha, int n, double t, std::span<const double> x,
                              double u_resolution, int d = 1);

/// Both envelopes from one pass over the grid.
EnvelopeResult envelopes(const Generator& g, double alpha, int n, double t, std::span<const double> x,
                         double u_resolution, int d = 1);

struct SandwichReport {
    std::size_t samples = 0;
    std::size_t violations = 0;
    double worst_violation = 0.0;  // largest excess beyond the bound (<= 0 means satisfied)
    double tolerance = 0.0;
    bool ok = true;
};

/// Checks, for every sampled y,
///   g(q_α(y)) - g0 >= lower - g0 - n|y|   and   g(q_α(y)) - g0 <= upper - g0 + n|y|
/// up to the grid tolerance 10 * u_resolution * (n + local Lipschitz estimate).
SandwichReport sandwich_check(const Generator& g, const EnvelopeResult& env, double t, std::span<const double> x,
                              std::span<const double> y_samples, double u_resolution, int d = 1);

struct ConvergenceRow {
    int n = 0;
    double lower = 0.0;
    double upper = 0.0;
    double combined = 0.0;  // |lower - g0| + |upper - g0|
    double bound = 0.0;     // 2ψ̂ + 4|g0|
    double argmin_u = 0.0;
};

struct ConvergenceCurve {
    double alpha = 0.0;
    double t = 0.0;
    double g0 = 0.0;
    std::vector<ConvergenceRow> rows;
    bool lower_monotone = true;
    bool upper_monotone = true;
    bool combined_monotone = true;
    bool bound_respected = true;
    double tolerance = 0.0;
};

/// Envelope table over increasing n. Monotonicity and the bound are checked up to
/// two grid cells of objective variation.
ConvergenceCurve convergence_curve(const Generator& g, double alpha, double t, std::span<const double> x,
                                   std::span<const int> n_list, double u_resolution, int d = 1);

}  // namespace bsdelab
