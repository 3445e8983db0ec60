#pragma once

#include "bsdelab/core.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/representation.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace bsdelab {

/// u_t + L u + g(t, x, u, σᵀ∇u) = 0 on [0, T), u(T, ·) = Φ.
struct PDEProblem {
    SdeModel sde;
    Generator g;
    std::function<double(std::span<const double>)> terminal;
    /// Declared polynomial growth: |Φ(x)| + |g(t,x,0,0)| <= L (1 + |x|^p).
    double growth_L = 1.0;
    double growth_p = 2.0;
    double horizon = 1.0;
    /// Spatial domain of the finite-difference reference (n = 1).
    double x_lo = -12.566370614359172;
    double x_hi = 12.566370614359172;

    /// Checks the shape and samples the growth bound; throws ValidationError (GROWTH).
    void validate() const;
};

/// b = 0, σ = sigma, g = a y, Φ = cos. Exact solution e^{(a - σ²/2)(T - t)} cos x.
PDEProblem cosine_problem(double a = 0.0, double sigma = 1.0, double horizon = 1.0);

/// b = 0, σ = 1, g = 0, Φ = x². Exact solution x² + (T - t).
PDEProblem quadratic_problem(double horizon = 1.0);

/// b = 0, σ = 1, g = 0, Φ = slope x + intercept. Exact solution Φ.
PDEProblem affine_problem(double slope, double intercept, double horizon = 1.0);

struct MCEstimate {
    double u = 0.0;
    double sd = 0.0;  // spread of the pathwise backward sum
    double se = 0.0;
    int basis_degree = 0;
};

/// Y^{t,x}_t from Euler-Maruyama paths on [t, T] with config.n_steps steps.
MCEstimate mc_solution(const PDEProblem& problem, double t, double x, const ExperimentConfig& config);

struct FlowRow {
    std::size_t path = 0;
    double t = 0.0;
    double x = 0.0;
    double y_conditional = 0.0;  // regression value Y_{t_j} on the original paths
    double u_rerooted = 0.0;     // fresh solve from (t_j, X_{t_j})
    double tolerance = 0.0;
    bool ok = true;
};

/// Re-roots the solution at step `step` on a few paths and compares with the
/// conditional values of the original solve. Tolerance max(2% |u|, 3 SE).
std::vector<FlowRow> flow_consistency(const PDEProblem& problem, double t, double x, std::size_t step,
                                      std::size_t n_check, const ExperimentConfig& config);

enum class BoundaryRule {
    HeatKernel,  // terminal value transported by the frozen-coefficient Gaussian kernel
    Terminal,    // Φ(x_b) held fixed in time
};

struct FDField {
    double x_lo = 0.0;
    double h = 0.0;
    double k = 0.0;
    double theta = 0.5;
    double horizon = 0.0;
    std::size_t n_x = 0;  // spatial nodes
    std::size_t n_t = 0;  // time steps
    std::size_t degenerate_cells = 0;
    std::vector<double> values;  // [time index][space index], time index n at t = n k

    double x(std::size_t j) const { return x_lo + static_cast<double>(j) * h; }
    double t(std::size_t n) const { return n == n_t ? horizon : static_cast<double>(n) * k; }
    double at(std::size_t n, std::size_t j) const { return values[n * n_x + j]; }
    /// Bilinear interpolation; throws ValidationError outside the grid.
    double value(double t, double x) const;
};

/// θ-scheme on the linear part with the semilinear term explicit at the known level.
/// Throws ValidationError with code CFL or BOUNDARY.
FDField fd_reference(const PDEProblem& problem, double h, double k, double theta = 0.5,
                     BoundaryRule boundary = BoundaryRule::HeatKernel);

/// Largest change at the probe points when the domain is doubled about its centre.
double boundary_influence(const PDEProblem& problem, double h, double k, double theta, BoundaryRule boundary,
                          std::span<const double> t_points, std::span<const double> x_points);

/// E[f(m + s N)] by Gauss-Hermite quadrature.
double gauss_expectation(const std::function<double(double)>& f, double mean, double sd, int nodes = 40);

struct FDSettings {
    double h = 0.04908738521234052;  // π/64
    double k = 1e-3;
    double theta = 0.5;
    BoundaryRule boundary = BoundaryRule::HeatKernel;
};

struct DiscrepancyRow {
    double t = 0.0;
    double x = 0.0;
    double u_mc = 0.0;
    double sd = 0.0;
    double se = 0.0;
    double u_fd = 0.0;
    double diff = 0.0;
    double tolerance = 0.0;
    bool pass = true;
};

/// Per point |u_MC - u_FD| against max(2% |u_FD|, 3 SE + FD budget), where the
/// FD budget is 0.5% |u_FD| + 1e-4.
std::vector<DiscrepancyRow> mc_vs_fd(const PDEProblem& problem, std::span<const double> t_points,
                                     std::span<const double> x_points, const ExperimentConfig& config,
                                     const FDSettings& fd = {});

/// Smooth test function of (t, x) with analytic derivatives.
struct TestFunction {
    std::function<double(double, double)> value;
    std::function<double(double, double)> dt;
    std::function<double(double, double)> dx;
    std::function<double(double, double)> dxx;
};

/// The exact solution of cosine_problem(a, sigma, T) as a test function.
TestFunction cosine_exact(double a, double sigma, double horizon);

/// φ ± (x - x0)^4 for the given sign.
TestFunction add_quartic_bump(const TestFunction& phi, double x0, double sign);

/// Values of u used for touching-point validation; tolerance absorbs their error.
struct USource {
    std::function<double(double, double)> value;
    double tolerance = 1e-9;
    std::string kind = "exact";
};

USource usource_from_field(const FDField& field);
USource usource_from_function(std::function<double(double, double)> u, double tolerance, std::string kind);

enum class TouchMode { Sub, Super };
const char* to_string(TouchMode mode);

struct TouchOptions {
    double eps = 0.02;
    double stencil_dx = 0.05;
    double stencil_dt = 0.02;
    int stencil_radius = 3;
    std::size_t steps_per_eps = 50;
};

struct TouchResult {
    double t = 0.0;
    double x = 0.0;
    TouchMode mode = TouchMode::Sub;
    double u0 = 0.0;
    double residual_direct = 0.0;
    double quotient_eps = 0.0;       // quotient at eps
    double residual_quotient = 0.0;  // quotient at eps / 2
    double quotient_se = 0.0;
    double tolerance = 0.0;
    bool agree = true;
    bool sign_ok = true;
    bool pass = true;
};

/// Direct residual φ_t + Lφ + g(t, x, u, σᵀφ_x) and its representation-quotient
/// counterpart built from G(r, X, y', z') = (φ_t + Lφ)(r, X) + g(r, X, y' + φ̃, z' + σᵀφ_x),
/// φ̃ = φ shifted to touch u at (t, x). Throws ValidationError (TOUCH) when
/// (t, x) is not a local max (Sub) or min (Super) of u - φ on the stencil.
TouchResult viscosity_touch_check(const PDEProblem& problem, const USource& u, const TestFunction& phi, double t,
                                  double x, TouchMode mode, const ExperimentConfig& config,
                                  const TouchOptions& options = {});

}  // namespace bsdelab
