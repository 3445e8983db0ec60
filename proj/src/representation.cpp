#include "bsdelab/representation.hpp"

#include "bsdelab/errors.hpp"
#include "bsdelab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace bsdelab {

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // unbiased
};

Moments moments(const std::vector<double>& v) {
    Moments out;
    if (v.empty()) return out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double e : v) s += (e - out.mean) * (e - out.mean);
    out.var = v.size() > 1 ? s / static_cast<double>(v.size() - 1) : 0.0;
    return out;
}

bool any_nonzero(const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double e) { return e != 0.0; });
}

}  // namespace

const char* to_string(Verdict v) { return v == Verdict::Ordered ? "ORDERED" : "VIOLATION"; }

QuotientResult representation_quotient(const Generator& g, const ProbePoint& point, double eps,
                                       const ExperimentConfig& config, const QuotientOptions& options) {
    config.validate();
    require(eps > 0.0, "representation_quotient: eps must be positive");
    require(point.t >= 0.0, "representation_quotient: t must be nonnegative");
    require(point.t + eps <= options.horizon + 1e-12, "representation_quotient: t + eps exceeds the horizon");
    require(!point.z.empty(), "representation_quotient: z must have at least one component");
    require(options.steps_per_eps >= 1, "representation_quotient: steps_per_eps must be positive");
    require(options.barrier > 0.0, "representation_quotient: barrier must be positive");
    const int d = static_cast<int>(point.z.size());
    require(g.z_dim == 0 || g.z_dim == d, "representation_quotient: z dimension does not match the generator");
    const std::size_t paths = config.n_paths;
    const auto ud = static_cast<std::size_t>(d);

    const TimeGrid grid(point.t, point.t + eps, options.steps_per_eps);
    const BrownianBatch noise = sample_brownian(grid, paths, d, config.seed, 0, config.threads);

    std::optional<ForwardBatch> states;
    if (options.sde) {
        require(point.x.has_value(), "representation_quotient: an SDE state needs a starting point x");
        require(options.sde->d == d, "representation_quotient: SDE noise dimension differs from z");
        require(point.x->size() == static_cast<std::size_t>(options.sde->n),
                "representation_quotient: x has the wrong dimension for the SDE");
        states.emplace(euler_maruyama(*options.sde, *point.x, noise, config.threads));
    } else {
        std::vector<double> anchors(paths * ud, 0.0);
        if (point.x) {
            require(point.x->size() == ud, "representation_quotient: x must have the Brownian dimension");
            for (std::size_t m = 0; m < paths; ++m) std::copy(point.x->begin(), point.x->end(), anchors.begin() + static_cast<std::ptrdiff_t>(m * ud));
        } else if (point.t > 0.0) {
            const BrownianBatch past = sample_brownian(TimeGrid(0.0, point.t, 1), paths, d, config.seed, 1, config.threads);
            for (std::size_t m = 0; m < paths; ++m) {
                const auto inc = past.increment(m, 0);
                std::copy(inc.begin(), inc.end(), anchors.begin() + static_cast<std::ptrdiff_t>(m * ud));
            }
        }
        states.emplace(brownian_states(noise, paths == 1 ? std::span<const double>(anchors.data(), ud)
                                                          : std::span<const double>(anchors),
                                       config.threads));
    }
    const ForwardBatch& x_batch = *states;
    const int n = x_batch.dim();

    std::vector<std::size_t> stop(paths);
    std::size_t stopped = 0;
    for (std::size_t m = 0; m < paths; ++m) {
        stop[m] = stopping_index(noise, m, g, &x_batch, options.barrier);
        if (stop[m] < grid.n_steps()) ++stopped;
    }

    // Regression features: the state when g reads it, the displacement when ξ does.
    const bool use_state = g.state_dependent;
    const bool use_disp = any_nonzero(point.z);
    const int nf = (use_state ? n : 0) + (use_disp ? d : 0);
    std::vector<double> feat(paths * (grid.n_steps() + 1) * static_cast<std::size_t>(nf));
    {
        const auto unf = static_cast<std::size_t>(nf);
        std::vector<double> disp(ud);
        for (std::size_t m = 0; m < paths; ++m) {
            std::fill(disp.begin(), disp.end(), 0.0);
            for (std::size_t i = 0; i <= grid.n_steps(); ++i) {
                if (i > 0) {
                    const auto inc = noise.increment(m, i - 1);
                    for (std::size_t k = 0; k < ud; ++k) disp[k] += inc[k];
                }
                double* out = feat.data() + (i * paths + m) * unf;
                std::size_t c = 0;
                if (use_state) {
                    const auto s = x_batch.state(m, i);
                    for (double v : s) out[c++] = v;
                }
                if (use_disp) {
                    for (double v : disp) out[c++] = v;
                }
            }
        }
    }
    const ForwardBatch features(grid, paths, nf, std::move(feat));

    BSDEProblem problem;
    problem.generator = g;
    problem.t_start = grid.t_start();
    problem.t_end = grid.t_end();
    problem.dimension_d = d;
    problem.terminal = [&](const PathView& p) {
        double xi = point.y;
        for (int k = 0; k < d; ++k) xi += point.z[static_cast<std::size_t>(k)] * p.displacement(stop[p.path()], k);
        return xi;
    };
    ExperimentConfig solve_config = config;
    solve_config.n_steps = grid.n_steps();
    SolveOptions solve_options;
    solve_options.stop_indices = stop;
    solve_options.features = &features;
    const SolutionBatch sol = solve_bsde(problem, x_batch, noise, solve_config, solve_options);

    QuotientResult r;
    r.eps = eps;
    r.quotients.resize(paths);
    r.targets.resize(paths);
    for (std::size_t m = 0; m < paths; ++m) {
        r.quotients[m] = (sol.y(m, 0) - point.y) / eps;
        r.targets[m] = g(point.t, x_batch.state(m, 0), point.y, point.z);
    }
    const Moments q = moments(r.quotients);
    r.mean = q.mean;
    r.sd = std::sqrt(q.var);
    r.residual_se = sol.pathwise_se[0] / eps;
    r.se = std::sqrt(q.var / static_cast<double>(paths) + r.residual_se * r.residual_se);
    r.target_mean = moments(r.targets).mean;
    r.stopped_fraction = static_cast<double>(stopped) / static_cast<double>(paths);
    if (r.stopped_fraction > 0.01) {
        r.warnings.push_back("stopping time binds on " + std::to_string(r.stopped_fraction * 100.0) +
                             "% of paths; eps is large for the barrier");
        warn_once("tau-binding-" + std::to_string(eps), r.warnings.back());
    }
    return r;
}

double fit_log_slope(const std::vector<double>& eps, const std::vector<double>& errors) {
    require(eps.size() == errors.size() && eps.size() >= 2, "fit_log_slope: need at least two points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto n = static_cast<double>(eps.size());
    for (std::size_t k = 0; k < eps.size(); ++k) {
        require(eps[k] > 0.0 && errors[k] > 0.0, "fit_log_slope: values must be positive");
        const double lx = std::log(eps[k]);
        const double ly = std::log(errors[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

RepresentationReport convergence_study(const Generator& g, const ProbePoint& point,
                                       const std::vector<double>& eps_schedule, const ExperimentConfig& config,
                                       const QuotientOptions& options) {
    require(!eps_schedule.empty(), "convergence_study: empty eps schedule");
    for (std::size_t k = 0; k < eps_schedule.size(); ++k) {
        require(eps_schedule[k] > 0.0, "convergence_study: eps values must be positive");
        if (k > 0) require(eps_schedule[k] < eps_schedule[k - 1], "convergence_study: eps schedule must be strictly decreasing");
    }
    RepresentationReport report;
    report.point = point;
    report.eps_schedule = eps_schedule;

    std::vector<double> norms = config.p_norms;
    for (double p : {1.0, 2.0}) {
        if (std::find(norms.begin(), norms.end(), p) == norms.end()) norms.push_back(p);
    }
    std::sort(norms.begin(), norms.end());

    for (double eps : eps_schedule) {
        const QuotientResult q = representation_quotient(g, point, eps, config, options);
        EpsRow row;
        row.eps = eps;
        row.quotient_mean = q.mean;
        row.sd = q.sd;
        row.se = q.se;
        row.target_mean = q.target_mean;
        row.stopped_fraction = q.stopped_fraction;
        std::vector<double> abs_err(q.quotients.size());
        double abs_target = 0.0;
        for (std::size_t m = 0; m < abs_err.size(); ++m) {
            abs_err[m] = std::abs(q.quotients[m] - q.targets[m]);
            abs_target += std::abs(q.targets[m]);
        }
        row.mean_abs_target = abs_target / static_cast<double>(abs_err.size());
        for (double p : norms) {
            double s = 0.0;
            for (double e : abs_err) s += std::pow(e, p);
            const double err = std::pow(s / static_cast<double>(abs_err.size()), 1.0 / p);
            row.lp_errors.emplace_back(p, err);
            if (p == 1.0) row.l1_error = err;
            if (p == 2.0) row.l2_error = err;
        }
        const Moments e = moments(abs_err);
        row.error_se = std::sqrt(e.var / static_cast<double>(abs_err.size()) + q.se * q.se);
        if (row.l1_error > row.l2_error * (1.0 + 1e-12) + 1e-15) report.power_mean_ordered = false;
        report.warnings.insert(report.warnings.end(), q.warnings.begin(), q.warnings.end());
        report.rows.push_back(std::move(row));
    }

    for (std::size_t k = 1; k < report.rows.size(); ++k) {
        const auto& prev = report.rows[k - 1];
        const auto& cur = report.rows[k];
        if (!(cur.l1_error < prev.l1_error + std::max(prev.error_se, cur.error_se))) report.errors_decreasing = false;
    }

    const bool resolvable = report.rows.size() >= 2 &&
                            std::all_of(report.rows.begin(), report.rows.end(), [](const EpsRow& r) {
                                return r.l1_error > 3.0 * r.error_se && r.l1_error > 1e-14;
                            });
    if (resolvable) {
        std::vector<double> errs;
        for (const auto& r : report.rows) errs.push_back(r.l1_error);
        report.fitted_rate = fit_log_slope(eps_schedule, errs);
    }
    return report;
}

ConverseReport converse_comparison_probe(const Generator& g1, const Generator& g2,
                                         const std::vector<ProbePoint>& points, double eps,
                                         const ExperimentConfig& config, const QuotientOptions& options,
                                         const HypothesisOptions& hypothesis) {
    require(!points.empty(), "converse_comparison_probe: no probe points");
    const int d = static_cast<int>(points.front().z.size());
    for (const auto& p : points) require(static_cast<int>(p.z.size()) == d, "converse_comparison_probe: z dimensions differ");

    ConverseReport report;
    {
        ExperimentConfig hc = config;
        hc.n_paths = std::min(config.n_paths, hypothesis.n_paths);
        hc.n_steps = hypothesis.n_steps;
        const TimeGrid grid(0.0, hypothesis.horizon, hc.n_steps);
        const BrownianBatch noise = sample_brownian(grid, hc.n_paths, d, config.seed ^ 0x5EEDull, 3, config.threads);
        const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
        const ForwardBatch forward = brownian_states(noise, origin, config.threads);
        const std::vector<std::function<double(const PathView&)>> terminals{
            [](const PathView&) { return 0.0; },
            [](const PathView& p) { return p.displacement(p.n_steps(), 0); },
            [](const PathView& p) { return std::sin(3.0 * p.displacement(p.n_steps(), 0)); },
            [](const PathView& p) { return -std::abs(p.displacement(p.n_steps(), 0)); },
        };
        BSDEProblem tmpl;
        tmpl.generator = g1;
        tmpl.t_start = 0.0;
        tmpl.t_end = hypothesis.horizon;
        tmpl.dimension_d = d;
        double worst_fraction = 1.0;
        for (const auto& xi : terminals) {
            tmpl.terminal = xi;
            try {
                const ComparisonReport c = comparison_check(g1, g2, tmpl, forward, noise, hc);
                worst_fraction = std::min(worst_fraction, c.fraction);
            } catch (const ValidationError& e) {
                throw ValidationError(std::string("converse: solution ordering hypothesis fails: ") + e.what(),
                                      "HYPOTHESIS_FAIL");
            }
        }
        report.hypothesis_fraction = worst_fraction;
        if (worst_fraction < 0.999) {
            throw ValidationError("converse: solution ordering hypothesis fails on " +
                                      std::to_string((1.0 - worst_fraction) * 100.0) + "% of (path, step) pairs",
                                  "HYPOTHESIS_FAIL");
        }
    }

    for (std::size_t id = 0; id < points.size(); ++id) {
        const QuotientResult q1 = representation_quotient(g1, points[id], eps, config, options);
        const QuotientResult q2 = representation_quotient(g2, points[id], eps, config, options);
        std::vector<double> diff(q1.quotients.size());
        for (std::size_t m = 0; m < diff.size(); ++m) diff[m] = q1.quotients[m] - q2.quotients[m];
        const Moments md = moments(diff);
        ConverseRow row;
        row.point_id = id;
        row.point = points[id];
        row.mean1 = q1.mean;
        row.mean2 = q2.mean;
        row.se_diff = std::sqrt(md.var / static_cast<double>(diff.size()) + q1.residual_se * q1.residual_se +
                                q2.residual_se * q2.residual_se);
        row.verdict = row.mean1 >= row.mean2 - 3.0 * row.se_diff ? Verdict::Ordered : Verdict::Violation;
        if (row.verdict == Verdict::Violation) report.all_ordered = false;
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace bsdelab
