#include "bsdelab/cli.hpp"

#include "bsdelab/envelope.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/feynmankac.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/representation.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/solver.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace bsdelab {

namespace {

struct Csv {
    std::ostringstream text;

    void comment(const std::string& line) { text << "# " << line << '\n'; }
    void header(const std::vector<std::string>& cols) {
        for (std::size_t k = 0; k < cols.size(); ++k) text << (k ? "," : "") << cols[k];
        text << '\n';
    }
    void row(const std::vector<std::string>& cells) { header(cells); }
};

std::string join(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (std::size_t k = 0; k < items.size(); ++k) out += (k ? sep : "") + items[k];
    return out;
}

std::string join_numbers(const std::vector<double>& v, const char* sep) {
    std::vector<std::string> items;
    for (double e : v) items.push_back(format_number(e));
    return join(items, sep);
}

std::size_t positive_count(const KvConfig& cfg, const std::string& key, long long fallback) {
    const long long v = cfg.get_int(key, fallback);
    if (v < 1) throw ValidationError(key + " must be a positive integer (got " + std::to_string(v) + ")");
    return static_cast<std::size_t>(v);
}

void manifest(Csv& csv, const RunConfig& rc, const std::vector<std::string>& columns) {
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, rc.parameters.hash({"seed", "threads", "output", "subcommand"}));
    csv.comment(std::string("bsdelab schema=") + std::to_string(kSchemaVersion) + " subcommand=" + rc.subcommand +
                " config_hash=" + hash + " seed=" + std::to_string(rc.seed) + " version=" + kVersion);
    csv.header(columns);
}

/// Forward model shared by simulate and solve.
struct ForwardSpec {
    std::string kind = "brownian";
    int dim = 1;
    double mu = 0.0;
    double sigma = 1.0;
    std::vector<double> x0;
    double t_start = 0.0;
    double t_end = 1.0;
};

ForwardSpec forward_from_config(const KvConfig& cfg) {
    ForwardSpec s;
    s.kind = cfg.get_string("sde", "brownian");
    s.dim = static_cast<int>(positive_count(cfg, "dimension", 1));
    s.mu = cfg.get_double("sde.mu", 0.0);
    s.sigma = cfg.get_double("sde.sigma", 1.0);
    s.t_start = cfg.get_double("t_start", 0.0);
    s.t_end = cfg.get_double("t_end", 1.0);
    const double x_default = s.kind == "geometric" ? 1.0 : 0.0;
    s.x0 = cfg.get_list("x0", std::vector<double>(static_cast<std::size_t>(s.kind == "geometric" ? 1 : s.dim),
                                                  x_default));
    if (s.kind != "brownian" && s.kind != "arithmetic" && s.kind != "geometric") {
        throw ValidationError("sde must be brownian, arithmetic or geometric (got '" + s.kind + "')");
    }
    if (s.kind == "geometric") require(s.dim == 1, "geometric sde needs dimension = 1");
    require(s.x0.size() == static_cast<std::size_t>(s.dim), "x0 must have `dimension` entries");
    require(s.t_start >= 0.0 && s.t_start < s.t_end, "need 0 <= t_start < t_end");
    return s;
}

ForwardBatch build_forward(const ForwardSpec& s, const BrownianBatch& noise, int threads) {
    if (s.kind == "brownian") return brownian_states(noise, s.x0, threads);
    const SdeModel model =
        s.kind == "geometric" ? SdeModel::geometric(s.mu, s.sigma) : SdeModel::arithmetic(s.dim, s.mu, s.sigma);
    return euler_maruyama(model, s.x0, noise, threads);
}

std::string simulate(const RunConfig& rc) {
    const KvConfig& cfg = rc.parameters;
    const ExperimentConfig ec = experiment_from_config(cfg, rc.seed);
    const ForwardSpec spec = forward_from_config(cfg);
    cfg.reject_unused();

    const TimeGrid grid(spec.t_start, spec.t_end, ec.n_steps);
    const BrownianBatch noise = sample_brownian(grid, ec.n_paths, spec.dim, ec.seed, 0, ec.threads);
    const ForwardBatch fwd = build_forward(spec, noise, ec.threads);

    Csv csv;
    std::vector<std::string> cols{"step", "t"};
    for (int k = 1; k <= fwd.dim(); ++k) {
        cols.push_back("mean_x" + std::to_string(k));
        cols.push_back("var_x" + std::to_string(k));
    }
    manifest(csv, rc, cols);
    const auto paths = static_cast<double>(fwd.n_paths());
    for (std::size_t i = 0; i <= grid.n_steps(); ++i) {
        std::vector<std::string> row{std::to_string(i), format_number(grid.time(i))};
        for (int k = 0; k < fwd.dim(); ++k) {
            double s = 0.0;
            for (std::size_t m = 0; m < fwd.n_paths(); ++m) s += fwd.state(m, i)[static_cast<std::size_t>(k)];
            const double mean = s / paths;
            double v = 0.0;
            for (std::size_t m = 0; m < fwd.n_paths(); ++m) {
                const double e = fwd.state(m, i)[static_cast<std::size_t>(k)] - mean;
                v += e * e;
            }
            row.push_back(format_number(mean));
            row.push_back(format_number(paths > 1 ? v / (paths - 1.0) : 0.0));
        }
        csv.row(row);
    }
    return csv.text.str();
}

std::function<double(const PathView&)> terminal_from_config(const KvConfig& cfg, int d) {
    const std::string kind = cfg.get_string("terminal", "linear");
    if (kind == "linear") {
        const double y = cfg.get_double("terminal.y", 0.0);
        const std::vector<double> z = cfg.get_list("terminal.z", std::vector<double>(static_cast<std::size_t>(d), 0.0));
        require(z.size() == static_cast<std::size_t>(d), "terminal.z must have `dimension` entries");
        return [y, z](const PathView& p) {
            double v = y;
            for (std::size_t k = 0; k < z.size(); ++k) v += z[k] * p.displacement(p.n_steps(), static_cast<int>(k));
            return v;
        };
    }
    if (kind == "cos") return [](const PathView& p) { return std::cos(p.terminal_state()[0]); };
    if (kind == "square") return [](const PathView& p) { return p.terminal_state()[0] * p.terminal_state()[0]; };
    if (kind == "abs") return [](const PathView& p) { return std::abs(p.terminal_state()[0]); };
    throw ValidationError("terminal must be linear, cos, square or abs (got '" + kind + "')");
}

std::string solve(const RunConfig& rc) {
    const KvConfig& cfg = rc.parameters;
    const ExperimentConfig ec = experiment_from_config(cfg, rc.seed);
    const ForwardSpec spec = forward_from_config(cfg);
    BSDEProblem problem;
    problem.generator = generator_from_config(cfg, "generator.");
    problem.t_start = spec.t_start;
    problem.t_end = spec.t_end;
    problem.dimension_d = spec.dim;
    problem.terminal = terminal_from_config(cfg, spec.dim);
    cfg.reject_unused();
    problem.validate();

    const TimeGrid grid(spec.t_start, spec.t_end, ec.n_steps);
    const BrownianBatch noise = sample_brownian(grid, ec.n_paths, spec.dim, ec.seed, 0, ec.threads);
    const ForwardBatch fwd = build_forward(spec, noise, ec.threads);
    const SolutionBatch sol = solve_bsde(problem, fwd, noise, ec);

    Csv csv;
    std::vector<std::string> cols{"step", "t", "meanY", "sdY"};
    for (int k = 1; k <= spec.dim; ++k) cols.push_back("meanZ_" + std::to_string(k));
    cols.push_back("picard_iters_max");
    cols.push_back("cond_number");
    manifest(csv, rc, cols);
    csv.comment("sup_abs_y=" + format_number(sol.sup_abs_y) + " se_y0=" + format_number(sol.pathwise_se[0]));
    for (std::size_t i = 0; i <= grid.n_steps(); ++i) {
        std::vector<std::string> row{std::to_string(i), format_number(grid.time(i)), format_number(sol.mean_y(i)),
                                     format_number(sol.sd_y(i))};
        for (int k = 0; k < spec.dim; ++k) row.push_back(format_number(i < grid.n_steps() ? sol.mean_z(i, k) : 0.0));
        const StepDiagnostics diag = i < grid.n_steps() ? sol.diagnostics[i] : StepDiagnostics{};
        row.push_back(std::to_string(diag.picard_iters_max));
        row.push_back(format_number(diag.condition_number));
        csv.row(row);
    }
    return csv.text.str();
}

std::string envelope(const RunConfig& rc, std::string* csv_out) {
    const KvConfig& cfg = rc.parameters;
    const Generator g = generator_from_config(cfg, "generator.");
    const double alpha = cfg.get_double("alpha", 1.0);
    const std::vector<double> n_raw = cfg.get_list("n_list", {1, 2, 4, 8, 16});
    const double t = cfg.get_double("t", 0.0);
    const std::vector<double> x = cfg.get_list("x", {0.0});
    const double res = cfg.get_double("u_resolution", 1e-4);
    const int d = static_cast<int>(positive_count(cfg, "dimension", 1));
    const std::size_t samples = positive_count(cfg, "sandwich_samples", 100);
    const bool assert_checks = cfg.get_bool("assert", true);
    cfg.reject_unused();

    std::vector<int> n_list;
    for (double v : n_raw) {
        if (v < 1 || v != std::floor(v)) throw ValidationError("n_list entries must be positive integers");
        n_list.push_back(static_cast<int>(v));
    }
    const ConvergenceCurve curve = convergence_curve(g, alpha, t, x, n_list, res, d);

    Csv csv;
    manifest(csv, rc, {"alpha", "n", "t", "lower", "upper", "combined", "bound"});
    std::size_t sandwich_violations = 0;
    for (const auto& row : curve.rows) {
        csv.row({format_number(alpha), std::to_string(row.n), format_number(t), format_number(row.lower),
                 format_number(row.upper), format_number(row.combined), format_number(row.bound)});
        std::vector<double> ys(samples);
        for (std::size_t s = 0; s < samples; ++s) {
            ys[s] = -3.0 * alpha - 1.0 +
                    (6.0 * alpha + 2.0) * keyed_uniform(rc.seed, static_cast<std::uint32_t>(s),
                                                        static_cast<std::uint32_t>(row.n), 21);
        }
        const EnvelopeResult env = envelopes(g, alpha, row.n, t, x, res, d);
        sandwich_violations += sandwich_check(g, env, t, x, ys, res, d).violations;
    }
    csv.comment("lower_monotone=" + std::to_string(curve.lower_monotone) + " upper_monotone=" +
                std::to_string(curve.upper_monotone) + " bound_respected=" + std::to_string(curve.bound_respected) +
                " sandwich_violations=" + std::to_string(sandwich_violations));
    *csv_out = csv.text.str();
    if (assert_checks && !(curve.lower_monotone && curve.upper_monotone && curve.bound_respected)) {
        throw ExperimentError("envelope: monotonicity or bound check failed", "ENVELOPE_CHECK");
    }
    if (assert_checks && sandwich_violations > 0) {
        throw ExperimentError("envelope: " + std::to_string(sandwich_violations) + " sandwich violations",
                              "SANDWICH");
    }
    return *csv_out;
}

QuotientOptions quotient_options(const KvConfig& cfg) {
    QuotientOptions q;
    q.barrier = cfg.get_double("barrier", 1.0);
    q.steps_per_eps = positive_count(cfg, "steps_per_eps", 50);
    q.horizon = cfg.get_double("horizon", std::numeric_limits<double>::infinity());
    return q;
}

std::string represent(const RunConfig& rc, std::string* csv_out) {
    const KvConfig& cfg = rc.parameters;
    const ExperimentConfig ec = experiment_from_config(cfg, rc.seed);
    const Generator g = generator_from_config(cfg, "generator.");
    ProbePoint point;
    point.t = cfg.get_double("t", 0.0);
    point.y = cfg.get_double("y", 0.0);
    point.z = cfg.get_list("z", {0.0});
    if (cfg.has("x")) point.x = cfg.get_list("x");
    const std::vector<double> eps = cfg.get_list("eps", {0.1, 0.05, 0.025, 0.0125});
    const QuotientOptions qopt = quotient_options(cfg);
    const bool assert_checks = cfg.get_bool("assert", true);
    cfg.reject_unused();

    const RepresentationReport report = convergence_study(g, point, eps, ec, qopt);

    Csv csv;
    manifest(csv, rc, {"t", "y", "z", "eps", "quotient_mean", "sd", "target", "l1_err", "l2_err", "rate"});
    const std::string rate = report.fitted_rate ? format_number(*report.fitted_rate) : "nan";
    for (const auto& row : report.rows) {
        csv.row({format_number(point.t), format_number(point.y), join_numbers(point.z, ";"), format_number(row.eps),
                 format_number(row.quotient_mean), format_number(row.sd), format_number(row.target_mean),
                 format_number(row.l1_error), format_number(row.l2_error), rate});
    }
    csv.comment("errors_decreasing=" + std::to_string(report.errors_decreasing) +
                " power_mean_ordered=" + std::to_string(report.power_mean_ordered));
    *csv_out = csv.text.str();
    if (assert_checks && !report.errors_decreasing) {
        throw ExperimentError("represent: L1 errors are not decreasing along the eps schedule", "NON_MONOTONE");
    }
    if (assert_checks && !report.power_mean_ordered) {
        throw ExperimentError("represent: L1 error exceeds L2 error", "POWER_MEAN");
    }
    return *csv_out;
}

std::string converse(const RunConfig& rc, std::string* csv_out) {
    const KvConfig& cfg = rc.parameters;
    const ExperimentConfig ec = experiment_from_config(cfg, rc.seed);
    const Generator g1 = generator_from_config(cfg, "g1.");
    const Generator g2 = generator_from_config(cfg, "g2.");
    const double eps = cfg.get_double("eps", 0.05);
    const QuotientOptions qopt = quotient_options(cfg);
    HypothesisOptions hyp;
    hyp.n_paths = positive_count(cfg, "hypothesis.n_paths", static_cast<long long>(hyp.n_paths));
    hyp.n_steps = positive_count(cfg, "hypothesis.n_steps", static_cast<long long>(hyp.n_steps));
    hyp.horizon = cfg.get_double("hypothesis.horizon", hyp.horizon);
    std::vector<ProbePoint> points;
    if (cfg.has("points.t")) {
        const auto ts = cfg.get_list("points.t");
        const auto ys = cfg.get_list("points.y");
        const auto zs = cfg.get_list("points.z");
        require(ts.size() == ys.size() && ts.size() == zs.size(), "points.t, points.y and points.z differ in length");
        for (std::size_t k = 0; k < ts.size(); ++k) points.push_back({ts[k], std::nullopt, ys[k], {zs[k]}});
    } else {
        const std::size_t count = positive_count(cfg, "points.count", 5);
        for (std::size_t k = 0; k < count; ++k) {
            const auto u = [&](std::uint32_t slot) {
                return keyed_uniform(rc.seed, static_cast<std::uint32_t>(k), slot, 23);
            };
            points.push_back({0.5 * u(0), std::nullopt, -1.0 + 2.0 * u(1), {-1.0 + 2.0 * u(2)}});
        }
    }
    const bool assert_checks = cfg.get_bool("assert", true);
    cfg.reject_unused();

    const ConverseReport report = converse_comparison_probe(g1, g2, points, eps, ec, qopt, hyp);
    Csv csv;
    manifest(csv, rc, {"point_id", "mean1", "mean2", "se_diff", "verdict"});
    csv.comment("hypothesis_fraction=" + format_number(report.hypothesis_fraction));
    for (const auto& row : report.rows) {
        csv.row({std::to_string(row.point_id), format_number(row.mean1), format_number(row.mean2),
                 format_number(row.se_diff), to_string(row.verdict)});
    }
    *csv_out = csv.text.str();
    if (assert_checks && !report.all_ordered) {
        throw ExperimentError("converse: at least one point shows a VIOLATION", "VIOLATION");
    }
    return *csv_out;
}

struct PdeSpec {
    PDEProblem problem;
    std::string kind;
    TestFunction exact;
};

PdeSpec pde_from_config(const KvConfig& cfg) {
    PdeSpec s;
    s.kind = cfg.get_string("pde", "cosine");
    const double horizon = cfg.get_double("horizon", 1.0);
    if (s.kind == "cosine") {
        const double a = cfg.get_double("pde.a", 0.0);
        const double sigma = cfg.get_double("pde.sigma", 1.0);
        s.problem = cosine_problem(a, sigma, horizon);
        s.exact = cosine_exact(a, sigma, horizon);
    } else if (s.kind == "quadratic") {
        s.problem = quadratic_problem(horizon);
        s.exact.value = [horizon](double t, double x) { return x * x + (horizon - t); };
        s.exact.dt = [](double, double) { return -1.0; };
        s.exact.dx = [](double, double x) { return 2.0 * x; };
        s.exact.dxx = [](double, double) { return 2.0; };
    } else if (s.kind == "affine") {
        const double slope = cfg.get_double("pde.slope", 1.0);
        const double intercept = cfg.get_double("pde.intercept", 0.0);
        s.problem = affine_problem(slope, intercept, horizon);
        s.exact.value = [slope, intercept](double, double x) { return slope * x + intercept; };
        s.exact.dt = [](double, double) { return 0.0; };
        s.exact.dx = [slope](double, double) { return slope; };
        s.exact.dxx = [](double, double) { return 0.0; };
    } else {
        throw ValidationError("pde must be cosine, quadratic or affine (got '" + s.kind + "')");
    }
    s.problem.x_lo = cfg.get_double("x_lo", -4.0 * std::numbers::pi);
    s.problem.x_hi = cfg.get_double("x_hi", 4.0 * std::numbers::pi);
    return s;
}

FDSettings fd_from_config(const KvConfig& cfg) {
    FDSettings fd;
    fd.h = cfg.get_double("fd.h", fd.h);
    fd.k = cfg.get_double("fd.k", fd.k);
    fd.theta = cfg.get_double("fd.theta", fd.theta);
    const std::string b = cfg.get_string("fd.boundary", "heat_kernel");
    if (b == "heat_kernel") {
        fd.boundary = BoundaryRule::HeatKernel;
    } else if (b == "terminal") {
        fd.boundary = BoundaryRule::Terminal;
    } else {
        throw ValidationError("fd.boundary must be heat_kernel or terminal (got '" + b + "')", "BOUNDARY");
    }
    return fd;
}

std::string fk(const RunConfig& rc, std::string* csv_out) {
    const KvConfig& cfg = rc.parameters;
    const ExperimentConfig ec = experiment_from_config(cfg, rc.seed);
    const PdeSpec spec = pde_from_config(cfg);
    const FDSettings fd = fd_from_config(cfg);
    const std::vector<double> ts = cfg.get_list("points.t", {0.0});
    const std::vector<double> xs = cfg.get_list("points.x", {0.0});
    const bool assert_checks = cfg.get_bool("assert", true);
    cfg.reject_unused();
    require(ts.size() == xs.size(), "points.t and points.x differ in length");

    const auto rows = mc_vs_fd(spec.problem, ts, xs, ec, fd);
    Csv csv;
    manifest(csv, rc, {"t", "x", "u_mc", "sd", "u_fd", "diff", "pass"});
    bool all = true;
    for (const auto& r : rows) {
        csv.row({format_number(r.t), format_number(r.x), format_number(r.u_mc), format_number(r.sd),
                 format_number(r.u_fd), format_number(r.diff), r.pass ? "1" : "0"});
        all = all && r.pass;
    }
    *csv_out = csv.text.str();
    if (assert_checks && !all) throw ExperimentError("fk: Monte Carlo and finite differences disagree", "FK_MISMATCH");
    return *csv_out;
}

std::string touch(const RunConfig& rc, std::string* csv_out) {
    const KvConfig& cfg = rc.parameters;
    const ExperimentConfig ec = experiment_from_config(cfg, rc.seed);
    const PdeSpec spec = pde_from_config(cfg);
    const std::string mode_name = cfg.get_string("mode", "sub");
    const std::string phi_kind = cfg.get_string("phi", "exact");
    const std::string source = cfg.get_string("u_source", "exact");
    const std::vector<double> ts = cfg.get_list("points.t", {0.5});
    const std::vector<double> xs = cfg.get_list("points.x", {0.0});
    TouchOptions topt;
    topt.eps = cfg.get_double("eps", topt.eps);
    topt.steps_per_eps = positive_count(cfg, "steps_per_eps", static_cast<long long>(topt.steps_per_eps));
    FDSettings fd;
    if (source == "fd") fd = fd_from_config(cfg);
    const bool assert_checks = cfg.get_bool("assert", true);
    cfg.reject_unused();

    require(ts.size() == xs.size(), "points.t and points.x differ in length");
    if (mode_name != "sub" && mode_name != "super") throw ValidationError("mode must be sub or super");
    if (phi_kind != "exact" && phi_kind != "bump") throw ValidationError("phi must be exact or bump");
    const TouchMode mode = mode_name == "sub" ? TouchMode::Sub : TouchMode::Super;

    USource u;
    if (source == "exact") {
        u = usource_from_function(spec.exact.value, 1e-12, "exact");
    } else if (source == "fd") {
        u = usource_from_field(fd_reference(spec.problem, fd.h, fd.k, fd.theta, fd.boundary));
    } else {
        throw ValidationError("u_source must be exact or fd");
    }

    Csv csv;
    manifest(csv, rc, {"t", "x", "mode", "residual_direct", "residual_quotient", "pass"});
    bool all = true;
    for (std::size_t p = 0; p < ts.size(); ++p) {
        // A max of u - phi needs phi above u away from x, a min needs it below.
        const TestFunction phi =
            phi_kind == "exact" ? spec.exact : add_quartic_bump(spec.exact, xs[p], mode == TouchMode::Sub ? 1.0 : -1.0);
        const TouchResult r = viscosity_touch_check(spec.problem, u, phi, ts[p], xs[p], mode, ec, topt);
        csv.row({format_number(r.t), format_number(r.x), to_string(r.mode), format_number(r.residual_direct),
                 format_number(r.residual_quotient), r.pass ? "1" : "0"});
        all = all && r.pass;
    }
    *csv_out = csv.text.str();
    if (assert_checks && !all) throw ExperimentError("touch: residuals disagree or have the wrong sign", "TOUCH_RESIDUAL");
    return *csv_out;
}

const char* kHelpFooter = R"(Subcommands and CSV columns:
  simulate   step,t,mean_x1,var_x1,...          forward paths (sde = brownian|arithmetic|geometric)
  solve      step,t,meanY,sdY,meanZ_1..d,picard_iters_max,cond_number
  envelope   alpha,n,t,lower,upper,combined,bound
  represent  t,y,z,eps,quotient_mean,sd,target,l1_err,l2_err,rate   (z joined by ';', rate nan when skipped)
  converse   point_id,mean1,mean2,se_diff,verdict                   (verdict ORDERED|VIOLATION)
  fk         t,x,u_mc,sd,u_fd,diff,pass
  touch      t,x,mode,residual_direct,residual_quotient,pass

Config file: one `key = value` per line, `#` starts a comment, unknown keys are rejected.
Generators: generator.name and generator.param.<p> (g1.* / g2.* for converse).
Exit codes: 0 success, 2 validation, 3 numerical, 4 experiment assertion.)";

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);
    return buf;
}

std::vector<std::string> subcommand_names() {
    return {"simulate", "solve", "envelope", "represent", "converse", "fk", "touch"};
}

Generator generator_from_config(const KvConfig& cfg, const std::string& prefix) {
    const std::string name = cfg.get_string(prefix + "name");
    ParamMap params;
    for (const auto& key : cfg.keys_with_prefix(prefix + "param.")) {
        params[key] = cfg.get_list(prefix + "param." + key);
    }
    return builtin_generator(name, params);
}

ExperimentConfig experiment_from_config(const KvConfig& cfg, std::uint64_t seed) {
    ExperimentConfig ec;
    ec.seed = seed;
    ec.n_paths = positive_count(cfg, "n_paths", static_cast<long long>(ec.n_paths));
    ec.n_steps = positive_count(cfg, "n_steps", static_cast<long long>(ec.n_steps));
    ec.basis_degree = static_cast<int>(cfg.get_int("basis_degree", ec.basis_degree));
    ec.picard_max = static_cast<int>(cfg.get_int("picard_max", ec.picard_max));
    ec.picard_tol = cfg.get_double("picard_tol", ec.picard_tol);
    ec.threads = static_cast<int>(positive_count(cfg, "threads", ec.threads));
    ec.cond_threshold = cfg.get_double("cond_threshold", ec.cond_threshold);
    ec.p_norms = cfg.get_list("p_norms", ec.p_norms);
    ec.validate();
    return ec;
}

std::string run_subcommand(const RunConfig& config, std::string* csv_out) {
    std::string scratch;
    std::string* out = csv_out ? csv_out : &scratch;
    const std::string& s = config.subcommand;
    // Run-level keys are valid for every subcommand, including those that never spawn threads.
    for (const char* key : {"threads", "seed", "output", "subcommand"}) (void)config.parameters.get_string(key, "");
    if (s == "simulate") return *out = simulate(config);
    if (s == "solve") return *out = solve(config);
    if (s == "envelope") return envelope(config, out);
    if (s == "represent") return represent(config, out);
    if (s == "converse") return converse(config, out);
    if (s == "fk") return fk(config, out);
    if (s == "touch") return touch(config, out);
    throw ValidationError("unknown subcommand '" + s + "'", "UNKNOWN_SUBCOMMAND");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"bsdelab: BSDE representation and Feynman-Kac laboratory", "bsdelab"};
    app.footer(kHelpFooter);
    std::string subcommand;
    std::string config_path;
    std::string out_path;
    std::optional<long long> seed;
    std::optional<int> threads;
    app.add_option("subcommand", subcommand, "simulate|solve|envelope|represent|converse|fk|touch");
    app.add_option("--config", config_path, "flat key = value configuration file")->required();
    app.add_option("--seed", seed, "overrides the seed key");
    app.add_option("--out", out_path, "CSV output path (default: standard output)");
    app.add_option("--threads", threads, "worker threads (results do not depend on it)");

    const auto fail = [&err](int code, const std::string& tag, std::string msg) {
        for (char& c : msg) {
            if (c == '\n' || c == '\r') c = ' ';
        }
        err << "error: " << tag << ": " << msg << '\n';
        return code;
    };

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        return fail(2, "USAGE", e.what());
    }

    std::string csv;
    RunConfig rc;
    try {
        KvConfig cfg = KvConfig::load(config_path);
        if (threads) cfg.set("threads", std::to_string(*threads));
        const std::string from_file = cfg.get_string("subcommand", "");
        rc.subcommand = subcommand.empty() ? from_file : subcommand;
        if (rc.subcommand.empty()) throw ValidationError("no subcommand given", "UNKNOWN_SUBCOMMAND");
        if (!subcommand.empty() && !from_file.empty() && from_file != subcommand) {
            throw ValidationError("subcommand '" + subcommand + "' conflicts with config subcommand '" + from_file + "'");
        }
        // Config values are read even when overridden so they never count as unknown keys.
        const long long file_seed = cfg.get_int("seed", 0);
        const std::string file_output = cfg.get_string("output", "");
        const long long seed_value = seed ? *seed : file_seed;
        if (seed_value < 0) throw ValidationError("seed must be nonnegative");
        rc.seed = static_cast<std::uint64_t>(seed_value);
        rc.output_path = out_path.empty() ? file_output : out_path;
        rc.parameters = std::move(cfg);
    } catch (const Error& e) {
        return fail(2, e.code(), e.what());
    }

    const auto emit = [&]() {
        if (csv.empty()) return;
        if (rc.output_path.empty()) {
            out << csv;
            return;
        }
        std::ofstream f(rc.output_path, std::ios::binary);
        if (!f) throw ValidationError("cannot write '" + rc.output_path + "'", "OUTPUT_IO");
        f << csv;
    };
    try {
        run_subcommand(rc, &csv);
        emit();
        return 0;
    } catch (const ExperimentError& e) {
        try {
            emit();
        } catch (const Error& io) {
            return fail(2, io.code(), io.what());
        }
        return fail(4, e.code(), e.what());
    } catch (const ValidationError& e) {
        return fail(2, e.code(), e.what());
    } catch (const NumericalError& e) {
        return fail(3, e.code(), e.what());
    } catch (const std::exception& e) {
        return fail(3, "INTERNAL", e.what());
    }
}

}  // namespace bsdelab
