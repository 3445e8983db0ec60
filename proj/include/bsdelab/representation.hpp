#pragma once

#include "bsdelab/core.hpp"
#include "bsdelab/paths.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bsdelab {

/// Probe point (t, x, y, z). When x is empty and no SDE is supplied, the state
/// is the Brownian value B_t itself, drawn exactly from N(0, t I) per path.
struct ProbePoint {
    double t = 0.0;
    std::optional<std::vector<double>> x;
    double y = 0.0;
    std::vector<double> z{0.0};
};

struct QuotientOptions {
    double barrier = 1.0;
    std::size_t steps_per_eps = 50;
    double horizon = std::numeric_limits<double>::infinity();
    /// Forward state model; defaults to the Brownian path started at x (or at B_t).
    const SdeModel* sde = nullptr;
};

/// Monte Carlo distribution of (Y_t(g, (t+ε)∧τ, y + <z, B_{(t+ε)∧τ} - B_t>) - y) / ε.
struct QuotientResult {
    double eps = 0.0;
    double mean = 0.0;
    double sd = 0.0;        // spread of per-path quotients
    double se = 0.0;        // standard error of the mean estimate
    double residual_se = 0.0;  // regression part of se (pathwise backward-sum spread / ε)
    double stopped_fraction = 0.0;
    double target_mean = 0.0;
    std::vector<double> quotients;
    std::vector<double> targets;  // g(t, x_m, y, z) per path
    std::vector<std::string> warnings;
};

QuotientResult representation_quotient(const Generator& g, const ProbePoint& point, double eps,
                                       const ExperimentConfig& config, const QuotientOptions& options = {});

struct EpsRow {
    double eps = 0.0;
    double quotient_mean = 0.0;
    double sd = 0.0;
    double se = 0.0;
    double target_mean = 0.0;
    double mean_abs_target = 0.0;
    std::vector<std::pair<double, double>> lp_errors;  // (p, error)
    double l1_error = 0.0;
    double l2_error = 0.0;
    double error_se = 0.0;
    double stopped_fraction = 0.0;
};

struct RepresentationReport {
    ProbePoint point;
    std::vector<double> eps_schedule;
    std::vector<EpsRow> rows;
    std::optional<double> fitted_rate;
    bool errors_decreasing = true;
    bool power_mean_ordered = true;  // L1 <= L2 for every ε
    std::vector<std::string> warnings;
};

/// Runs the quotient for each ε of a strictly decreasing schedule, measures the
/// L^p distance to the pathwise target g(t, x, y, z) and fits log(error) vs log(ε).
/// The rate fit is skipped when any L1 error is within 3 standard errors of 0.
RepresentationReport convergence_study(const Generator& g, const ProbePoint& point,
                                       const std::vector<double>& eps_schedule, const ExperimentConfig& config,
                                       const QuotientOptions& options = {});

/// Least-squares slope of log(errors) against log(eps).
double fit_log_slope(const std::vector<double>& eps, const std::vector<double>& errors);

enum class Verdict { Ordered, Violation };

struct ConverseRow {
    std::size_t point_id = 0;
    ProbePoint point;
    double mean1 = 0.0;
    double mean2 = 0.0;
    double se_diff = 0.0;
    Verdict verdict = Verdict::Ordered;
};

struct ConverseReport {
    std::vector<ConverseRow> rows;
    double hypothesis_fraction = 1.0;
    bool all_ordered = true;
};

struct HypothesisOptions {
    std::size_t n_paths = 20000;
    std::size_t n_steps = 20;
    double horizon = 1.0;
};

/// Checks the solution-ordering hypothesis Y(g1) >= Y(g2) on several terminal
/// conditions (throws ValidationError with code HYPOTHESIS_FAIL if it fails),
/// then compares the quotients of g1 and g2 at every point on common paths.
ConverseReport converse_comparison_probe(const Generator& g1, const Generator& g2,
                                         const std::vector<ProbePoint>& points, double eps,
                                         const ExperimentConfig& config, const QuotientOptions& options = {},
                                         const HypothesisOptions& hypothesis = {});

const char* to_string(Verdict v);

}  // namespace bsdelab
