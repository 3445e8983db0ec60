#include "bsdelab/solver.hpp"

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bsdelab {

double StepFit::conditional_mean(std::span<const double> features) const {
    return basis.evaluate(features).dot(coeffs.col(0));
}

double StepFit::z(std::span<const double> features, int k) const {
    return basis.evaluate(features).dot(coeffs.col(1 + k));
}

SolutionBatch::SolutionBatch(TimeGrid grid, std::size_t n_paths, int d)
    : grid_(grid), n_paths_(n_paths), d_(d), y_(n_paths * (grid.n_steps() + 1), 0.0),
      z_(n_paths * grid.n_steps() * static_cast<std::size_t>(d), 0.0) {}

double SolutionBatch::mean_y(std::size_t i) const {
    double s = 0.0;
    for (double v : y_step(i)) s += v;
    return s / static_cast<double>(n_paths_);
}

double SolutionBatch::sd_y(std::size_t i) const {
    const double mu = mean_y(i);
    double s = 0.0;
    for (double v : y_step(i)) s += (v - mu) * (v - mu);
    return n_paths_ > 1 ? std::sqrt(s / static_cast<double>(n_paths_ - 1)) : 0.0;
}

double SolutionBatch::mean_z(std::size_t i, int k) const {
    double s = 0.0;
    for (std::size_t m = 0; m < n_paths_; ++m) s += z(m, i)[static_cast<std::size_t>(k)];
    return s / static_cast<double>(n_paths_);
}

ImplicitStepResult solve_implicit_step(double base, double dt, const std::function<double(double)>& f, double tol,
                                       int max_iter) {
    ImplicitStepResult out;
    if (dt == 0.0) {
        out.y = base;
        return out;
    }
    double y = base;
    double damping = 1.0;
    double previous_step = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= max_iter; ++k) {
        const double image = base + dt * f(y);
        out.iterations = k;
        if (!std::isfinite(image)) break;
        const double step = image - y;
        if (std::abs(step) <= tol * (1.0 + std::abs(y))) {
            out.y = y + damping * step;
            return out;
        }
        if (std::abs(step) >= previous_step) damping = 0.5;
        y += damping * step;
        previous_step = std::abs(step);
    }

    // y - dt f(y) - base is increasing while dt times the monotonicity slope is below one.
    out.bisected = true;
    const auto residual = [&](double v) { return v - dt * f(v) - base; };
    if (!std::isfinite(y)) y = base;
    double width = std::max(1.0, std::abs(y - base)) * 1e-3 + tol;
    double lo = y - width;
    double hi = y + width;
    // Bracket growth is capped so cancellation at huge |v| cannot fake a sign change.
    const double max_width = 1e9 * (1.0 + std::abs(y) + std::abs(base));
    while (!(residual(lo) <= 0.0) && width < max_width) {
        width *= 2.0;
        lo = y - width;
    }
    while (!(residual(hi) >= 0.0) && width < max_width) {
        width *= 2.0;
        hi = y + width;
    }
    if (!(residual(lo) <= 0.0 && residual(hi) >= 0.0)) {
        throw NumericalError("implicit step: Picard did not converge and no root could be bracketed (residual " +
                                 std::to_string(residual(y)) + ")",
                             "PICARD");
    }
    for (int k = 0; k < 2000 && hi - lo > tol * (1.0 + std::abs(lo)); ++k) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) <= 0.0 ? lo : hi) = mid;
        ++out.iterations;
    }
    out.y = 0.5 * (lo + hi);
    return out;
}

SolutionBatch solve_bsde(const BSDEProblem& problem, const ForwardBatch& forward, const BrownianBatch& brownian,
                         const ExperimentConfig& config, const SolveOptions& options) {
    problem.validate();
    config.validate();
    const TimeGrid& grid = brownian.grid();
    const std::size_t paths = brownian.n_paths();
    const std::size_t steps = grid.n_steps();
    const int d = brownian.dim();
    const auto ud = static_cast<std::size_t>(d);
    require(forward.n_paths() == paths && forward.n_steps() == steps,
            "solve_bsde: forward and Brownian batches differ in size");
    require(forward.grid().t_start() == grid.t_start() && forward.grid().t_end() == grid.t_end(),
            "solve_bsde: forward and Brownian batches use different grids");
    require(d == problem.dimension_d, "solve_bsde: Brownian dimension differs from the problem dimension");
    require(std::abs(grid.t_start() - problem.t_start) <= 1e-12 * (1.0 + std::abs(problem.t_start)) &&
                std::abs(grid.t_end() - problem.t_end) <= 1e-12 * (1.0 + std::abs(problem.t_end)),
            "solve_bsde: grid does not span [t_start, t_end] of the problem");
    require(options.stop_indices.empty() || options.stop_indices.size() == paths,
            "solve_bsde: stop index array has the wrong size");
    const ForwardBatch& features = options.features ? *options.features : forward;
    require(features.n_paths() == paths && features.n_steps() == steps,
            "solve_bsde: regression features have the wrong size");

    SolutionBatch sol(grid, paths, d);
    sol.fits.resize(steps);
    sol.diagnostics.resize(steps);
    sol.pathwise_se.assign(steps + 1, 0.0);
    const double dt = grid.dt();
    const Generator& g = problem.generator;

    for_each_block(paths, config.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) sol.y(m, steps) = problem.terminal(PathView(brownian, &forward, m));
    });
    for (std::size_t m = 0; m < paths; ++m) {
        if (!std::isfinite(sol.y(m, steps))) {
            throw NumericalError("solve_bsde: non-finite terminal value on path " + std::to_string(m), "NAN");
        }
    }

    std::vector<double> targets(paths * (1 + ud));
    std::vector<double> fitted(paths);
    const std::size_t blocks = block_count(paths);
    std::vector<int> block_iters(blocks);
    std::vector<std::size_t> block_bisections(blocks);
    std::vector<std::size_t> block_bad(blocks);

    for (std::size_t step = steps; step-- > 0;) {
        const double t = grid.time(step);
        const StepRegression reg(features.step(step), paths, features.dim(), config.basis_degree,
                                 config.cond_threshold, config.threads);
        const auto next = sol.y_step(step + 1);

        // Plain conditional mean, used to center the Z targets.
        std::copy(next.begin(), next.end(), targets.begin());
        const Eigen::MatrixXd plain = reg.fit({targets.data(), paths}, 1);
        reg.predict_all(plain, 0, fitted);
        for (std::size_t m = 0; m < paths; ++m) {
            const auto inc = brownian.increment(m, step);
            for (std::size_t k = 0; k < ud; ++k) targets[k * paths + m] = (next[m] - fitted[m]) * inc[k] / dt;
        }
        const Eigen::MatrixXd zc = reg.fit({targets.data(), paths * ud}, d);
        for (int k = 0; k < d; ++k) {
            reg.predict_all(zc, k, fitted);
            for (std::size_t m = 0; m < paths; ++m) sol.z(m, step)[static_cast<std::size_t>(k)] = fitted[m];
        }

        Eigen::MatrixXd mean_coeffs = plain;
        if (options.martingale_control) {
            for (std::size_t m = 0; m < paths; ++m) {
                const auto inc = brownian.increment(m, step);
                const auto zm = sol.z(m, step);
                double mart = 0.0;
                for (std::size_t k = 0; k < ud; ++k) mart += zm[k] * inc[k];
                targets[m] = next[m] - mart;
            }
            mean_coeffs = reg.fit({targets.data(), paths}, 1);
        }
        reg.predict_all(mean_coeffs, 0, fitted);

        std::fill(block_iters.begin(), block_iters.end(), 0);
        std::fill(block_bisections.begin(), block_bisections.end(), 0);
        std::fill(block_bad.begin(), block_bad.end(), paths);
        for_each_block(paths, config.threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
            for (std::size_t m = begin; m < end; ++m) {
                const bool active = options.stop_indices.empty() || step < options.stop_indices[m];
                const double dt_eff = active ? dt : 0.0;
                const auto x = forward.state(m, step);
                const auto zm = sol.z(m, step);
                const auto f = [&](double y) { return g(t, x, y, zm); };
                ImplicitStepResult r;
                try {
                    r = solve_implicit_step(fitted[m], dt_eff, f, config.picard_tol, config.picard_max);
                } catch (const NumericalError& e) {
                    throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step) + ", path " +
                                             std::to_string(m),
                                         e.code());
                }
                sol.y(m, step) = r.y;
                block_iters[b] = std::max(block_iters[b], r.iterations);
                block_bisections[b] += r.bisected ? 1 : 0;
                bool finite = std::isfinite(r.y);
                for (double v : zm) finite = finite && std::isfinite(v);
                if (!finite && block_bad[b] == paths) block_bad[b] = m;
            }
        });
        for (std::size_t m : block_bad) {
            if (m != paths) {
                throw NumericalError("solve_bsde: non-finite (Y, Z) at step " + std::to_string(step) + ", path " +
                                         std::to_string(m),
                                     "NAN");
            }
        }

        StepDiagnostics& diag = sol.diagnostics[step];
        diag.degree = reg.degree();
        diag.condition_number = reg.condition_number();
        diag.picard_iters_max = *std::max_element(block_iters.begin(), block_iters.end());
        for (std::size_t v : block_bisections) diag.bisections += v;

        StepFit& fit = sol.fits[step];
        fit.basis = reg.basis();
        fit.coeffs.resize(mean_coeffs.rows(), 1 + d);
        fit.coeffs.col(0) = mean_coeffs.col(0);
        fit.coeffs.rightCols(d) = zc;
    }

    for (std::size_t step = 0; step <= steps; ++step) {
        const auto ys = sol.y_step(step);
        for (double v : ys) sol.sup_abs_y = std::max(sol.sup_abs_y, std::abs(v));
    }
    // Pathwise backward sum ξ + Σ_{j>=i} (g_j dt - Z_j ΔB_j) against Y_i.
    {
        std::vector<double> partial(sol.y_step(steps).begin(), sol.y_step(steps).end());
        for (std::size_t step = steps + 1; step-- > 0;) {
            if (step < steps) {
                const double t = grid.time(step);
                for (std::size_t m = 0; m < paths; ++m) {
                    const bool active = options.stop_indices.empty() || step < options.stop_indices[m];
                    const auto zm = sol.z(m, step);
                    const auto inc = brownian.increment(m, step);
                    double mart = 0.0;
                    for (std::size_t k = 0; k < ud; ++k) mart += zm[k] * inc[k];
                    const double gval = active ? g(t, forward.state(m, step), sol.y(m, step), zm) * dt : 0.0;
                    partial[m] += gval - mart;
                }
            }
            double mean = 0.0;
            for (std::size_t m = 0; m < paths; ++m) mean += partial[m] - sol.y(m, step);
            mean /= static_cast<double>(paths);
            double var = 0.0;
            for (std::size_t m = 0; m < paths; ++m) {
                const double e = partial[m] - sol.y(m, step) - mean;
                var += e * e;
            }
            var /= static_cast<double>(std::max<std::size_t>(paths, 2) - 1);
            sol.pathwise_se[step] = std::sqrt(var / static_cast<double>(paths));
        }
    }
    return sol;
}

double closed_form_linear(double a, std::span<const double> b, double c, double y0, std::span<const double> z0,
                          double t_end, double t_start) {
    require(t_end >= t_start, "closed_form_linear: t_end must not precede t_start");
    require(z0.empty() || b.empty() || z0.size() == b.size(), "closed_form_linear: z0 and b dimensions differ");
    const double horizon = t_end - t_start;
    double drift = 0.0;
    for (std::size_t k = 0; k < std::min(b.size(), z0.size()); ++k) drift += z0[k] * b[k];
    // Under the measure with dW = dB - b dt the linear BSDE reduces to the ODE y' = -(a y + c).
    const double growth = std::exp(a * horizon);
    const double accumulated = a == 0.0 ? horizon : std::expm1(a * horizon) / a;
    return growth * (y0 + drift * horizon) + c * accumulated;
}

ComparisonReport comparison_check(const Generator& g1, const Generator& g2, const BSDEProblem& problem_template,
                                  const ForwardBatch& forward, const BrownianBatch& brownian,
                                  const ExperimentConfig& config, std::size_t ordering_samples) {
    const double worst = generator_ordering_violation(g1, g2, ordering_samples, config.seed ^ 0xC0FFEEull,
                                                      forward.dim(), brownian.dim());
    if (worst > 1e-10) {
        throw ValidationError("comparison_check: g1 >= g2 fails on sampled tuples (worst violation " +
                                  std::to_string(worst) + ")",
                              "ORDERING");
    }
    BSDEProblem p1 = problem_template;
    p1.generator = g1;
    BSDEProblem p2 = problem_template;
    p2.generator = g2;
    const SolutionBatch s1 = solve_bsde(p1, forward, brownian, config);
    const SolutionBatch s2 = solve_bsde(p2, forward, brownian, config);

    ComparisonReport report;
    report.worst_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= s1.n_steps(); ++i) {
        const double se = std::hypot(s1.pathwise_se[i], s2.pathwise_se[i]);
        for (std::size_t m = 0; m < s1.n_paths(); ++m) {
            const double y1 = s1.y(m, i);
            const double y2 = s2.y(m, i);
            const double slack = config.picard_tol * (1.0 + std::abs(y1) + std::abs(y2)) * 10.0 + 3.0 * se;
            const double gap = y1 - y2 + slack;
            report.worst_gap = std::min(report.worst_gap, gap);
            ++report.pairs;
            if (gap >= 0.0) ++report.ordered;
        }
    }
    report.fraction = static_cast<double>(report.ordered) / static_cast<double>(report.pairs);
    report.y0_first = s1.mean_y(0);
    report.y0_second = s2.mean_y(0);
    return report;
}

StabilityReport stability_check(const BSDEProblem& problem, const std::function<double(const PathView&)>& perturbed,
                                const ForwardBatch& forward, const BrownianBatch& brownian,
                                const ExperimentConfig& config) {
    require(static_cast<bool>(perturbed), "stability_check: perturbed terminal is empty");
    BSDEProblem half = problem;
    half.terminal = [&](const PathView& p) { return 0.5 * (problem.terminal(p) + perturbed(p)); };
    BSDEProblem full = problem;
    full.terminal = perturbed;

    const SolutionBatch base = solve_bsde(problem, forward, brownian, config);
    const SolutionBatch moved = solve_bsde(full, forward, brownian, config);
    const SolutionBatch moved_half = solve_bsde(half, forward, brownian, config);

    StabilityReport report;
    const std::size_t paths = base.n_paths();
    const std::size_t steps = base.n_steps();
    for (std::size_t m = 0; m < paths; ++m) {
        double sup_full = 0.0;
        double sup_half = 0.0;
        for (std::size_t i = 0; i <= steps; ++i) {
            sup_full = std::max(sup_full, std::abs(moved.y(m, i) - base.y(m, i)));
            sup_half = std::max(sup_half, std::abs(moved_half.y(m, i) - base.y(m, i)));
        }
        const double dxi = moved.y(m, steps) - base.y(m, steps);
        report.numerator += sup_full * sup_full;
        report.numerator_half += sup_half * sup_half;
        report.denominator += dxi * dxi;
    }
    const auto n = static_cast<double>(paths);
    report.numerator /= n;
    report.numerator_half /= n;
    report.denominator /= n;
    report.ratio = report.denominator > 0.0 ? report.numerator / report.denominator : 0.0;
    report.quarter_ratio = report.numerator > 0.0 ? report.numerator_half / report.numerator : 0.0;
    report.finite = std::isfinite(report.ratio) && std::isfinite(report.numerator_half);
    report.quarter_ok = report.numerator == 0.0 ? report.numerator_half == 0.0
                                                : std::abs(report.quarter_ratio - 0.25) <= 0.25 * 0.2;
    report.max_abs_y = std::max({base.sup_abs_y, moved.sup_abs_y, moved_half.sup_abs_y});
    return report;
}

}  // namespace bsdelab
