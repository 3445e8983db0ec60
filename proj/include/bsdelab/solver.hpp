#pragma once

#include "bsdelab/core.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/regression.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace bsdelab {

struct StepDiagnostics {
    int degree = 0;
    double condition_number = 1.0;
    int picard_iters_max = 0;
    std::size_t bisections = 0;
};

/// Regression coefficients of one backward step: column 0 is the conditional
/// mean of Y_{i+1}, columns 1..d are the Z components.
struct StepFit {
    BasisDescriptor basis;
    Eigen::MatrixXd coeffs;

    double conditional_mean(std::span<const double> features) const;
    double z(std::span<const double> features, int k) const;
};

/// Pathwise (Y, Z) of a discretized BSDE; arrays are stored step-major.
class SolutionBatch {
public:
    SolutionBatch(TimeGrid grid, std::size_t n_paths, int d);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t n_steps() const noexcept { return grid_.n_steps(); }
    int dim() const noexcept { return d_; }

    double y(std::size_t m, std::size_t i) const noexcept { return y_[i * n_paths_ + m]; }
    double& y(std::size_t m, std::size_t i) noexcept { return y_[i * n_paths_ + m]; }
    std::span<const double> y_step(std::size_t i) const noexcept { return {y_.data() + i * n_paths_, n_paths_}; }
    std::span<const double> z(std::size_t m, std::size_t i) const noexcept {
        return {z_.data() + (i * n_paths_ + m) * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
    }
    std::span<double> z(std::size_t m, std::size_t i) noexcept {
        return {z_.data() + (i * n_paths_ + m) * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
    }

    double mean_y(std::size_t i) const;
    double sd_y(std::size_t i) const;
    double mean_z(std::size_t i, int k) const;

    /// Per-step fits (size n_steps).
    std::vector<StepFit> fits;
    std::vector<StepDiagnostics> diagnostics;
    /// Standard error of the step-i estimate, from the spread of the pathwise
    /// backward sum ξ + Σ_{j>=i}(g_j dt - Z_j ΔB_j) around Y_i.
    std::vector<double> pathwise_se;
    /// max_{m,i} |Y|, logged as the empirical boundedness check.
    double sup_abs_y = 0.0;

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    int d_;
    std::vector<double> y_;
    std::vector<double> z_;
};

struct SolveOptions {
    /// Per-path stopping indices; the generator is switched off for i >= stop[m].
    std::span<const std::size_t> stop_indices;
    /// Regression features; the forward states are used when null.
    const ForwardBatch* features = nullptr;
    /// Regress Y_{i+1} - Z_i ΔB_i instead of Y_{i+1} for the conditional mean.
    bool martingale_control = true;
};

/// Backward regression scheme with an implicit-in-y step:
///   Z_i = Ê_i[Y_{i+1} ΔB_i] / dt,  Y_i = Ê_i[Y_{i+1}] + g(t_i, X_i, Y_i, Z_i) dt.
SolutionBatch solve_bsde(const BSDEProblem& problem, const ForwardBatch& forward, const BrownianBatch& brownian,
                         const ExperimentConfig& config, const SolveOptions& options = {});

struct ImplicitStepResult {
    double y = 0.0;
    int iterations = 0;
    bool bisected = false;
};

/// Solves y = base + dt * f(y): plain Picard, damping 1/2 once the step size
/// stops shrinking, then bisection on the increasing map y - dt f(y).
/// Throws NumericalError when no root can be bracketed.
ImplicitStepResult solve_implicit_step(double base, double dt, const std::function<double(double)>& f, double tol,
                                       int max_iter);

/// Exact Y_{t_start} for g = a y + <b,z> + c and ξ = y0 + <z0, B_T - B_{t_start}>.
double closed_form_linear(double a, std::span<const double> b, double c, double y0, std::span<const double> z0,
                          double t_end, double t_start);

struct ComparisonReport {
    std::size_t pairs = 0;
    std::size_t ordered = 0;
    double fraction = 0.0;
    double worst_gap = 0.0;  // min over (m,i) of Y1 - Y2 + slack
    double y0_first = 0.0;
    double y0_second = 0.0;
};

/// Solves both BSDEs on the same paths and counts (path, step) pairs with
/// Y1 >= Y2 - slack. Throws ValidationError (code ORDERING) if g1 >= g2 fails
/// on sampled tuples.
ComparisonReport comparison_check(const Generator& g1, const Generator& g2, const BSDEProblem& problem_template,
                                  const ForwardBatch& forward, const BrownianBatch& brownian,
                                  const ExperimentConfig& config, std::size_t ordering_samples = 10000);

struct StabilityReport {
    double numerator = 0.0;       // E[max_i |δY_i|^2]
    double denominator = 0.0;     // E[|δξ|^2]
    double ratio = 0.0;
    double numerator_half = 0.0;  // same with δξ halved
    double quarter_ratio = 0.0;   // numerator_half / numerator, ideally 1/4
    bool finite = true;
    bool quarter_ok = true;
    double max_abs_y = 0.0;
};

/// A priori stability probe: compares solutions for ξ and ξ' on the same paths.
StabilityReport stability_check(const BSDEProblem& problem, const std::function<double(const PathView&)>& perturbed,
                                const ForwardBatch& forward, const BrownianBatch& brownian,
                                const ExperimentConfig& config);

}  // namespace bsdelab
