#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bsdelab {

class PathView;

/// Driver g(t, x, y, z) together with the regularity metadata it claims.
///
/// The state argument x carries any dependence on the sample path (for
/// instance |B_t|), so a generator is an ordinary deterministic function.
/// Evaluation must be pure: the solver calls it concurrently from path blocks.
struct Generator {
    using EvalFn =
        std::function<double(double t, std::span<const double> x, double y, std::span<const double> z)>;
    using ModulusFn = std::function<double(double)>;
    using GrowthFn = std::function<double(double alpha, double t, std::span<const double> x)>;

    std::string name;
    EvalFn eval;
    /// λ in |g(t,x,y,z1) - g(t,x,y,z2)| <= λ|z1 - z2|.
    double lipschitz_z = 0.0;
    /// ρ in (y1-y2)(g(y1) - g(y2)) <= ρ(|y1-y2|^2). Empty when undeclared.
    ModulusFn monotonicity_modulus;
    /// ψ(α,t,x) >= sup_{|y|<=α} |g(t,x,y,0) - g(t,x,0,0)|. Empty when undeclared.
    GrowthFn growth_bound;
    bool deterministic_in_t = true;
    bool state_dependent = false;
    /// Required length of z; 0 accepts any length.
    int z_dim = 0;
    /// Documentation only: the Osgood condition on the modulus cannot be sampled.
    std::string modulus_note;

    double operator()(double t, std::span<const double> x, double y, std::span<const double> z) const {
        return eval(t, x, y, z);
    }
    /// g(t, x, 0, 0) with a zero z of the given dimension.
    double at_origin(double t, std::span<const double> x, int d) const;
};

using ParamMap = std::map<std::string, std::vector<double>>;

/// Built-in generators:
///   linear(a, b, c)            g = a*y + <b,z> + c
///   z_abs(scale, c)            g = scale*|z| + c
///   entropy_stress(delta)      g = -exp(y*|x|) + h(|y|) + |z|   (alias: paper_example)
///   negative_exponential(rate) g = -rate*y
Generator builtin_generator(const std::string& name, const ParamMap& params = {});

/// Names accepted by builtin_generator.
std::vector<std::string> builtin_generator_names();

/// -u ln u on [0, delta], continued linearly with the left slope beyond delta.
double h_entropy(double u, double delta);

/// Radial clamp alpha*y / max(|y|, alpha); returns 0 when alpha == 0.
double q_trunc(double y, double alpha);

struct GeneratorCheck {
    std::size_t samples = 0;
    double worst_z_excess = 0.0;
    double worst_monotonicity_excess = 0.0;
    double worst_growth_excess = 0.0;
    bool ok = true;
};

/// Randomized check of the declared λ, ρ and ψ on sampled tuples.
/// Slack is relative: an excess counts only beyond slack * (1 + |terms|).
GeneratorCheck validate_generator(const Generator& g, std::size_t samples, std::uint64_t seed,
                                  int state_dim, int z_dim, double slack = 1e-10);

/// Largest sampled g2 - g1 (0 when g1 >= g2 on every sample).
double generator_ordering_violation(const Generator& g1, const Generator& g2, std::size_t samples,
                                    std::uint64_t seed, int state_dim, int z_dim);

/// dY = -g dt + Z dB on [t_start, t_end] with terminal value read from the path.
struct BSDEProblem {
    Generator generator;
    double t_start = 0.0;
    double t_end = 1.0;
    int dimension_d = 1;
    std::function<double(const PathView&)> terminal;

    void validate() const;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::size_t n_paths = 10000;
    std::size_t n_steps = 50;
    int basis_degree = 3;
    int picard_max = 100;
    double picard_tol = 1e-12;
    std::vector<double> p_norms{1.0, 2.0};
    int threads = 1;
    /// Normal-matrix condition number above which the basis degree is lowered.
    double cond_threshold = 1e10;

    void validate() const;
};

/// Prints a warning once per distinct tag to stderr.
void warn_once(const std::string& tag, const std::string& message);

}  // namespace bsdelab
