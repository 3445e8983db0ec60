#include "bsdelab/feynmankac.hpp"

#include "bsdelab/errors.hpp"
#include "bsdelab/solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>

namespace bsdelab {

namespace {

struct Coefficients {
    double drift = 0.0;
    double sigma = 0.0;
};

Coefficients scalar_coefficients(const SdeModel& sde, double t, double x) {
    double b = 0.0;
    double s = 0.0;
    const double xs[1] = {x};
    sde.drift(t, xs, std::span<double>(&b, 1));
    sde.diffusion(t, xs, std::span<double>(&s, 1));
    return {b, s};
}

void require_scalar(const PDEProblem& problem, const char* who) {
    if (problem.sde.n != 1 || problem.sde.d != 1) {
        throw ValidationError(std::string(who) + ": only n = d = 1 is supported");
    }
}

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Golub-Welsch for the probabilists' Hermite weight (standard normal density).
GaussRule hermite_rule(int n) {
    static std::mutex mutex;
    static std::map<int, GaussRule> cache;
    std::lock_guard lock(mutex);
    const auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
        jacobi(k - 1, k) = jacobi(k, k - 1);
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    GaussRule rule;
    for (int k = 0; k < n; ++k) {
        rule.nodes.push_back(eig.eigenvalues()(k));
        const double v = eig.eigenvectors()(0, k);
        rule.weights.push_back(v * v);
    }
    cache.emplace(n, rule);
    return rule;
}

/// Solves a tridiagonal system in place (Thomas algorithm); sub[0] and sup[n-1] are unused.
void thomas(std::vector<double>& sub, std::vector<double>& diag, std::vector<double>& sup, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

}  // namespace

void PDEProblem::validate() const {
    require(static_cast<bool>(g.eval), "PDE problem needs a generator");
    require(static_cast<bool>(terminal), "PDE problem needs a terminal function");
    require(static_cast<bool>(sde.drift) && static_cast<bool>(sde.diffusion), "PDE problem needs SDE coefficients");
    require(horizon > 0.0, "PDE horizon must be positive");
    require(x_lo < x_hi, "PDE domain needs x_lo < x_hi");
    require(growth_L > 0.0 && growth_p >= 0.0, "PDE growth constants must be positive");
    require(g.z_dim == 0 || g.z_dim == sde.d, "PDE generator z dimension differs from the noise dimension");

    const std::size_t n = static_cast<std::size_t>(sde.n);
    const std::vector<double> zero(static_cast<std::size_t>(sde.d), 0.0);
    std::vector<double> x(n);
    const double reach = std::max({std::abs(x_lo), std::abs(x_hi), 10.0});
    constexpr int kX = 201;
    constexpr int kT = 5;
    for (int a = 0; a < kT; ++a) {
        const double t = horizon * a / (kT - 1);
        for (int j = 0; j < kX; ++j) {
            const double v = -reach + 2.0 * reach * j / (kX - 1);
            std::fill(x.begin(), x.end(), v);
            double r = 0.0;
            for (double e : x) r += e * e;
            r = std::sqrt(r);
            const double lhs = std::abs(terminal(x)) + std::abs(g(t, x, 0.0, zero));
            const double rhs = growth_L * (1.0 + std::pow(r, growth_p));
            if (!(lhs <= rhs * (1.0 + 1e-12))) {
                throw ValidationError("PDE growth bound fails at t = " + std::to_string(t) + ", x = " +
                                          std::to_string(v) + ": " + std::to_string(lhs) + " > " + std::to_string(rhs),
                                      "GROWTH");
            }
        }
    }
}

PDEProblem cosine_problem(double a, double sigma, double horizon) {
    PDEProblem p;
    p.sde = SdeModel::arithmetic(1, 0.0, sigma);
    p.g = builtin_generator("linear", {{"a", {a}}});
    p.terminal = [](std::span<const double> x) { return std::cos(x[0]); };
    p.growth_L = 1.0;
    p.growth_p = 0.0;
    p.horizon = horizon;
    return p;
}

PDEProblem quadratic_problem(double horizon) {
    PDEProblem p;
    p.sde = SdeModel::arithmetic(1, 0.0, 1.0);
    p.g = builtin_generator("linear");
    p.terminal = [](std::span<const double> x) { return x[0] * x[0]; };
    p.growth_L = 1.0;
    p.growth_p = 2.0;
    p.horizon = horizon;
    return p;
}

PDEProblem affine_problem(double slope, double intercept, double horizon) {
    PDEProblem p;
    p.sde = SdeModel::arithmetic(1, 0.0, 1.0);
    p.g = builtin_generator("linear");
    p.terminal = [slope, intercept](std::span<const double> x) { return slope * x[0] + intercept; };
    p.growth_L = std::max(std::abs(slope) + std::abs(intercept), 1e-300);
    p.growth_p = 1.0;
    p.horizon = horizon;
    return p;
}

MCEstimate mc_solution(const PDEProblem& problem, double t, double x, const ExperimentConfig& config) {
    problem.validate();
    config.validate();
    require(t >= 0.0 && t < problem.horizon, "mc_solution: need 0 <= t < T");
    require(problem.sde.n == 1, "mc_solution: scalar starting point needs n = 1");
    const TimeGrid grid(t, problem.horizon, config.n_steps);
    const BrownianBatch noise = sample_brownian(grid, config.n_paths, problem.sde.d, config.seed, 0, config.threads);
    const double x0[1] = {x};
    const ForwardBatch forward = euler_maruyama(problem.sde, x0, noise, config.threads);

    BSDEProblem bsde;
    bsde.generator = problem.g;
    bsde.t_start = t;
    bsde.t_end = problem.horizon;
    bsde.dimension_d = problem.sde.d;
    bsde.terminal = [&](const PathView& p) { return problem.terminal(p.terminal_state()); };
    const SolutionBatch sol = solve_bsde(bsde, forward, noise, config);

    MCEstimate out;
    out.u = sol.mean_y(0);
    out.se = sol.pathwise_se[0];
    out.sd = out.se * std::sqrt(static_cast<double>(config.n_paths));
    out.basis_degree = sol.diagnostics.empty() ? 0 : sol.diagnostics.front().degree;
    return out;
}

std::vector<FlowRow> flow_consistency(const PDEProblem& problem, double t, double x, std::size_t step,
                                      std::size_t n_check, const ExperimentConfig& config) {
    problem.validate();
    config.validate();
    require(step >= 1 && step < config.n_steps, "flow_consistency: step must be interior");
    require(n_check >= 1 && n_check <= config.n_paths, "flow_consistency: bad number of checked paths");
    const TimeGrid grid(t, problem.horizon, config.n_steps);
    const BrownianBatch noise = sample_brownian(grid, config.n_paths, problem.sde.d, config.seed, 0, config.threads);
    const double x0[1] = {x};
    const ForwardBatch forward = euler_maruyama(problem.sde, x0, noise, config.threads);
    BSDEProblem bsde;
    bsde.generator = problem.g;
    bsde.t_start = t;
    bsde.t_end = problem.horizon;
    bsde.dimension_d = problem.sde.d;
    bsde.terminal = [&](const PathView& p) { return problem.terminal(p.terminal_state()); };
    const SolutionBatch sol = solve_bsde(bsde, forward, noise, config);

    std::vector<FlowRow> rows;
    for (std::size_t c = 0; c < n_check; ++c) {
        FlowRow row;
        row.path = c * (config.n_paths / n_check);
        row.t = grid.time(step);
        row.x = forward.state(row.path, step)[0];
        row.y_conditional = sol.y(row.path, step);
        ExperimentConfig sub = config;
        sub.n_steps = config.n_steps - step;
        sub.seed = config.seed + 1 + c;
        const MCEstimate fresh = mc_solution(problem, row.t, row.x, sub);
        row.u_rerooted = fresh.u;
        const double se = std::hypot(fresh.se, sol.pathwise_se[step]);
        row.tolerance = std::max(0.02 * std::abs(fresh.u), 3.0 * se);
        row.ok = std::abs(row.y_conditional - row.u_rerooted) <= row.tolerance;
        rows.push_back(row);
    }
    return rows;
}

double gauss_expectation(const std::function<double(double)>& f, double mean, double sd, int nodes) {
    require(nodes >= 1, "gauss_expectation: need at least one node");
    if (sd == 0.0) return f(mean);
    const GaussRule rule = hermite_rule(nodes);
    double s = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * f(mean + sd * rule.nodes[k]);
    return s;
}

double FDField::value(double tq, double xq) const {
    const double x_hi = x(n_x - 1);
    if (!(tq >= -1e-12 && tq <= horizon + 1e-12 && xq >= x_lo - 1e-12 && xq <= x_hi + 1e-12)) {
        throw ValidationError("FD field queried outside its grid at (" + std::to_string(tq) + ", " +
                              std::to_string(xq) + ")");
    }
    const double ft = std::clamp(tq / k, 0.0, static_cast<double>(n_t));
    const double fx = std::clamp((xq - x_lo) / h, 0.0, static_cast<double>(n_x - 1));
    const auto n0 = std::min(static_cast<std::size_t>(ft), n_t - 1);
    const auto j0 = std::min(static_cast<std::size_t>(fx), n_x - 2);
    const double wt = ft - static_cast<double>(n0);
    const double wx = fx - static_cast<double>(j0);
    const double low = (1.0 - wx) * at(n0, j0) + wx * at(n0, j0 + 1);
    const double high = (1.0 - wx) * at(n0 + 1, j0) + wx * at(n0 + 1, j0 + 1);
    return (1.0 - wt) * low + wt * high;
}

FDField fd_reference(const PDEProblem& problem, double h, double k, double theta, BoundaryRule boundary) {
    problem.validate();
    require_scalar(problem, "fd_reference");
    require(h > 0.0 && k > 0.0, "fd_reference: h and k must be positive");
    require(theta >= 0.0 && theta <= 1.0, "fd_reference: theta must lie in [0, 1]");
    const double width = problem.x_hi - problem.x_lo;
    const auto cells = static_cast<std::size_t>(std::llround(width / h));
    if (cells < 4) throw ValidationError("fd_reference: domain holds fewer than 4 cells", "BOUNDARY");
    const auto steps = static_cast<std::size_t>(std::max<long long>(1, std::llround(problem.horizon / k)));

    FDField field;
    field.x_lo = problem.x_lo;
    field.h = h;
    field.n_x = cells + 1;
    field.n_t = steps;
    field.horizon = problem.horizon;
    field.k = problem.horizon / static_cast<double>(steps);
    field.theta = theta;
    field.values.assign((steps + 1) * field.n_x, 0.0);
    const double kk = field.k;
    const std::size_t nx = field.n_x;

    std::vector<Coefficients> coef(nx);
    const auto load = [&](double t) {
        for (std::size_t j = 0; j < nx; ++j) coef[j] = scalar_coefficients(problem.sde, t, field.x(j));
    };

    if (theta < 0.5) {
        double worst = 0.0;
        for (double t : {0.0, 0.5 * problem.horizon, problem.horizon}) {
            load(t);
            for (const auto& c : coef) worst = std::max(worst, 0.5 * c.sigma * c.sigma);
        }
        const double limit = 1.0 / (2.0 * (1.0 - 2.0 * theta));
        if (kk * worst / (h * h) > limit) {
            throw ValidationError("fd_reference: CFL violated (k a / h^2 = " + std::to_string(kk * worst / (h * h)) +
                                      " > " + std::to_string(limit) + ")",
                                  "CFL");
        }
    }

    const auto boundary_value = [&](double t, double xb) {
        const double tau = problem.horizon - t;
        const double xs[1] = {xb};
        if (boundary == BoundaryRule::Terminal || tau <= 0.0) return problem.terminal(xs);
        const Coefficients c = scalar_coefficients(problem.sde, t, xb);
        return gauss_expectation(
            [&](double v) {
                const double p[1] = {v};
                return problem.terminal(p);
            },
            xb + c.drift * tau, std::abs(c.sigma) * std::sqrt(tau));
    };

    for (std::size_t j = 0; j < nx; ++j) {
        const double xs[1] = {field.x(j)};
        field.values[steps * nx + j] = problem.terminal(xs);
    }
    load(problem.horizon);
    for (const auto& c : coef) {
        if (0.5 * c.sigma * c.sigma < 1e-12) ++field.degenerate_cells;
    }

    const double inv_h2 = 1.0 / (h * h);
    const double inv_2h = 0.5 / h;
    const std::size_t inner = nx - 2;
    std::vector<double> sub(inner), diag(inner), sup(inner), rhs(inner);
    const std::vector<double> zero_z(1, 0.0);
    for (std::size_t n = steps; n-- > 0;) {
        const double t_next = field.t(n + 1);
        const double t_now = field.t(n);
        const double* next = field.values.data() + (n + 1) * nx;
        double* now = field.values.data() + n * nx;

        // Explicit part at the known level t_{n+1}.
        load(t_next);
        for (std::size_t j = 1; j + 1 < nx; ++j) {
            const auto& c = coef[j];
            const double a = 0.5 * c.sigma * c.sigma;
            const double lu = a * (next[j + 1] - 2.0 * next[j] + next[j - 1]) * inv_h2 +
                              c.drift * (next[j + 1] - next[j - 1]) * inv_2h;
            const double z = c.sigma * (next[j + 1] - next[j - 1]) * inv_2h;
            const double xs[1] = {field.x(j)};
            const double zs[1] = {z};
            const double gv = problem.g(t_next, xs, next[j], zs);
            rhs[j - 1] = next[j] + kk * (1.0 - theta) * lu + kk * gv;
        }
        if (!std::all_of(rhs.begin(), rhs.end(), [](double v) { return std::isfinite(v); })) {
            throw NumericalError("fd_reference: non-finite values at t = " + std::to_string(t_next), "NAN");
        }

        now[0] = boundary_value(t_now, field.x(0));
        now[nx - 1] = boundary_value(t_now, field.x(nx - 1));
        load(t_now);
        for (std::size_t j = 1; j + 1 < nx; ++j) {
            const auto& c = coef[j];
            const double a = 0.5 * c.sigma * c.sigma;
            const double lo = a * inv_h2 - c.drift * inv_2h;
            const double hi = a * inv_h2 + c.drift * inv_2h;
            sub[j - 1] = -kk * theta * lo;
            diag[j - 1] = 1.0 + kk * theta * 2.0 * a * inv_h2;
            sup[j - 1] = -kk * theta * hi;
        }
        rhs.front() -= sub.front() * now[0];
        rhs.back() -= sup.back() * now[nx - 1];
        thomas(sub, diag, sup, rhs);
        std::copy(rhs.begin(), rhs.end(), now + 1);
    }
    return field;
}

double boundary_influence(const PDEProblem& problem, double h, double k, double theta, BoundaryRule boundary,
                          std::span<const double> t_points, std::span<const double> x_points) {
    require(t_points.size() == x_points.size(), "boundary_influence: point lists differ in length");
    const FDField base = fd_reference(problem, h, k, theta, boundary);
    PDEProblem wide = problem;
    const double half = 0.5 * (problem.x_hi - problem.x_lo);
    wide.x_lo -= half;
    wide.x_hi += half;
    const FDField doubled = fd_reference(wide, h, k, theta, boundary);
    double worst = 0.0;
    for (std::size_t p = 0; p < t_points.size(); ++p) {
        worst = std::max(worst, std::abs(base.value(t_points[p], x_points[p]) - doubled.value(t_points[p], x_points[p])));
    }
    return worst;
}

std::vector<DiscrepancyRow> mc_vs_fd(const PDEProblem& problem, std::span<const double> t_points,
                                     std::span<const double> x_points, const ExperimentConfig& config,
                                     const FDSettings& fd) {
    require(t_points.size() == x_points.size(), "mc_vs_fd: point lists differ in length");
    const FDField field = fd_reference(problem, fd.h, fd.k, fd.theta, fd.boundary);
    std::vector<DiscrepancyRow> rows;
    for (std::size_t p = 0; p < t_points.size(); ++p) {
        DiscrepancyRow row;
        row.t = t_points[p];
        row.x = x_points[p];
        const MCEstimate mc = mc_solution(problem, row.t, row.x, config);
        row.u_mc = mc.u;
        row.sd = mc.sd;
        row.se = mc.se;
        row.u_fd = field.value(row.t, row.x);
        row.diff = std::abs(row.u_mc - row.u_fd);
        const double fd_budget = 0.005 * std::abs(row.u_fd) + 1e-4;
        row.tolerance = std::max(0.02 * std::abs(row.u_fd), 3.0 * row.se + fd_budget);
        row.pass = row.diff <= row.tolerance;
        rows.push_back(row);
    }
    return rows;
}

TestFunction cosine_exact(double a, double sigma, double horizon) {
    const double c = a - 0.5 * sigma * sigma;
    TestFunction f;
    f.value = [=](double t, double x) { return std::exp(c * (horizon - t)) * std::cos(x); };
    f.dt = [=](double t, double x) { return -c * std::exp(c * (horizon - t)) * std::cos(x); };
    f.dx = [=](double t, double x) { return -std::exp(c * (horizon - t)) * std::sin(x); };
    f.dxx = [=](double t, double x) { return -std::exp(c * (horizon - t)) * std::cos(x); };
    return f;
}

TestFunction add_quartic_bump(const TestFunction& phi, double x0, double sign) {
    TestFunction f;
    f.value = [=](double t, double x) { return phi.value(t, x) + sign * std::pow(x - x0, 4); };
    f.dt = phi.dt;
    f.dx = [=](double t, double x) { return phi.dx(t, x) + sign * 4.0 * std::pow(x - x0, 3); };
    f.dxx = [=](double t, double x) { return phi.dxx(t, x) + sign * 12.0 * (x - x0) * (x - x0); };
    return f;
}

USource usource_from_field(const FDField& field) {
    const double scale = *std::max_element(field.values.begin(), field.values.end(),
                                           [](double a, double b) { return std::abs(a) < std::abs(b); });
    USource u;
    u.value = [field](double t, double x) { return field.value(t, x); };
    u.tolerance = 0.005 * std::abs(scale) + 1e-4;
    u.kind = "fd";
    return u;
}

USource usource_from_function(std::function<double(double, double)> fn, double tolerance, std::string kind) {
    USource u;
    u.value = std::move(fn);
    u.tolerance = tolerance;
    u.kind = std::move(kind);
    return u;
}

const char* to_string(TouchMode mode) { return mode == TouchMode::Sub ? "sub" : "super"; }

TouchResult viscosity_touch_check(const PDEProblem& problem, const USource& u, const TestFunction& phi, double t,
                                  double x, TouchMode mode, const ExperimentConfig& config,
                                  const TouchOptions& options) {
    problem.validate();
    require_scalar(problem, "viscosity_touch_check");
    require(static_cast<bool>(u.value), "viscosity_touch_check: missing u source");
    require(phi.value && phi.dt && phi.dx && phi.dxx, "viscosity_touch_check: test function needs all derivatives");
    require(options.eps > 0.0 && t + options.eps <= problem.horizon,
            "viscosity_touch_check: need t + eps <= T");
    require(options.stencil_radius >= 1 && options.stencil_dx > 0.0 && options.stencil_dt > 0.0,
            "viscosity_touch_check: bad stencil");

    TouchResult r;
    r.t = t;
    r.x = x;
    r.mode = mode;
    r.u0 = u.value(t, x);
    const double gap0 = r.u0 - phi.value(t, x);
    for (int a = -options.stencil_radius; a <= options.stencil_radius; ++a) {
        const double tt = t + a * options.stencil_dt;
        if (tt < 0.0 || tt > problem.horizon) continue;
        for (int b = -options.stencil_radius; b <= options.stencil_radius; ++b) {
            const double xx = x + b * options.stencil_dx;
            const double gap = u.value(tt, xx) - phi.value(tt, xx);
            const double excess = mode == TouchMode::Sub ? gap - gap0 : gap0 - gap;
            if (excess > u.tolerance) {
                throw ValidationError(std::string("viscosity_touch_check: (t, x) is not a local ") +
                                          (mode == TouchMode::Sub ? "max" : "min") + " of u - phi; excess " +
                                          std::to_string(excess) + " at (" + std::to_string(tt) + ", " +
                                          std::to_string(xx) + ")",
                                      "TOUCH");
            }
        }
    }

    const Coefficients c0 = scalar_coefficients(problem.sde, t, x);
    {
        const double xs[1] = {x};
        const double zs[1] = {c0.sigma * phi.dx(t, x)};
        r.residual_direct = phi.dt(t, x) + 0.5 * c0.sigma * c0.sigma * phi.dxx(t, x) + c0.drift * phi.dx(t, x) +
                            problem.g(t, xs, r.u0, zs);
    }

    Generator big;
    big.name = "touch_G";
    big.state_dependent = true;
    big.z_dim = 1;
    big.lipschitz_z = problem.g.lipschitz_z;
    big.eval = [&problem, &phi, gap0](double s, std::span<const double> xs, double y, std::span<const double> z) {
        const double xv = xs[0];
        const Coefficients c = scalar_coefficients(problem.sde, s, xv);
        const double lphi = 0.5 * c.sigma * c.sigma * phi.dxx(s, xv) + c.drift * phi.dx(s, xv);
        const double zs[1] = {z[0] + c.sigma * phi.dx(s, xv)};
        return phi.dt(s, xv) + lphi + problem.g(s, xs, y + phi.value(s, xv) + gap0, zs);
    };

    ProbePoint point;
    point.t = t;
    point.x = std::vector<double>{x};
    point.y = 0.0;
    point.z = {0.0};
    QuotientOptions qopt;
    qopt.steps_per_eps = options.steps_per_eps;
    qopt.horizon = problem.horizon;
    qopt.sde = &problem.sde;
    const QuotientResult full = representation_quotient(big, point, options.eps, config, qopt);
    const QuotientResult half = representation_quotient(big, point, 0.5 * options.eps, config, qopt);
    r.quotient_eps = full.mean;
    r.residual_quotient = half.mean;
    r.quotient_se = half.se;
    // The O(eps) bias of the half-step quotient is estimated by the gap to the full step.
    r.tolerance = 3.0 * (half.se + full.se) + 2.0 * std::abs(full.mean - half.mean) +
                  1e-6 * (1.0 + std::abs(r.residual_direct));
    r.agree = std::abs(r.residual_direct - r.residual_quotient) <= r.tolerance;
    if (mode == TouchMode::Sub) {
        r.sign_ok = r.residual_direct >= -r.tolerance && r.residual_quotient >= -r.tolerance;
    } else {
        r.sign_ok = r.residual_direct <= r.tolerance && r.residual_quotient <= r.tolerance;
    }
    r.pass = r.agree && r.sign_ok;
    return r;
}

}  // namespace bsdelab
