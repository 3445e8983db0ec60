#pragma once

#include "bsdelab/core.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bsdelab {

/// Uniform grid on [t_start, t_end]. Grid times are formed by multiplication,
/// and the last point is t_end exactly.
class TimeGrid {
public:
    TimeGrid(double t_start, double t_end, std::size_t n_steps);

    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    double dt() const noexcept { return dt_; }
    double time(std::size_t i) const noexcept {
        return i == n_steps_ ? t_end_ : t_start_ + static_cast<double>(i) * dt_;
    }

private:
    double t_start_;
    double t_end_;
    std::size_t n_steps_;
    double dt_;
};

/// Brownian increments, stored step-major: increment(m, i) is ΔB_i of path m.
class BrownianBatch {
public:
    BrownianBatch(TimeGrid grid, std::size_t n_paths, int dim, std::uint64_t seed, std::uint32_t stream,
                  std::vector<double> increments);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t n_steps() const noexcept { return grid_.n_steps(); }
    int dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint32_t stream() const noexcept { return stream_; }

    std::span<const double> increment(std::size_t m, std::size_t i) const noexcept {
        return {increments_.data() + (i * n_paths_ + m) * static_cast<std::size_t>(dim_),
                static_cast<std::size_t>(dim_)};
    }
    /// B_{t_i} - B_{t_0} for coordinate k (sums i increments).
    double displacement(std::size_t m, std::size_t i, int k) const noexcept;
    const std::vector<double>& raw() const noexcept { return increments_; }

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    int dim_;
    std::uint64_t seed_;
    std::uint32_t stream_;
    std::vector<double> increments_;
};

/// Forward state values X_{t_i} for every path, stored step-major.
class ForwardBatch {
public:
    ForwardBatch(TimeGrid grid, std::size_t n_paths, int dim, std::vector<double> states);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t n_steps() const noexcept { return grid_.n_steps(); }
    int dim() const noexcept { return dim_; }

    std::span<const double> state(std::size_t m, std::size_t i) const noexcept {
        return {states_.data() + (i * n_paths_ + m) * static_cast<std::size_t>(dim_),
                static_cast<std::size_t>(dim_)};
    }
    std::span<double> state(std::size_t m, std::size_t i) noexcept {
        return {states_.data() + (i * n_paths_ + m) * static_cast<std::size_t>(dim_),
                static_cast<std::size_t>(dim_)};
    }
    /// All path states at step i, row-major [path][coordinate].
    std::span<const double> step(std::size_t i) const noexcept {
        const std::size_t w = n_paths_ * static_cast<std::size_t>(dim_);
        return {states_.data() + i * w, w};
    }

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    int dim_;
    std::vector<double> states_;
};

/// dX = b(t,X) dt + σ(t,X) dB with X in R^n and B in R^d.
struct SdeModel {
    int n = 1;
    int d = 1;
    /// Writes b(t, x) into out (length n).
    std::function<void(double t, std::span<const double> x, std::span<double> out)> drift;
    /// Writes σ(t, x) into out, row-major n x d.
    std::function<void(double t, std::span<const double> x, std::span<double> out)> diffusion;

    /// b = mu, σ = sigma * I (n = d).
    static SdeModel arithmetic(int dim, double mu, double sigma);
    /// b = mu x, σ = sigma x, scalar.
    static SdeModel geometric(double mu, double sigma);
};

/// Read-only view of one simulated path, handed to terminal functionals.
class PathView {
public:
    PathView(const BrownianBatch& brownian, const ForwardBatch* forward, std::size_t m)
        : brownian_(&brownian), forward_(forward), m_(m) {}

    std::size_t path() const noexcept { return m_; }
    std::size_t n_steps() const noexcept { return brownian_->n_steps(); }
    double time(std::size_t i) const noexcept { return brownian_->grid().time(i); }
    std::span<const double> increment(std::size_t i) const noexcept { return brownian_->increment(m_, i); }
    double displacement(std::size_t i, int k = 0) const noexcept { return brownian_->displacement(m_, i, k); }
    /// Forward state at step i; empty when no forward batch was supplied.
    std::span<const double> state(std::size_t i) const noexcept {
        return forward_ ? forward_->state(m_, i) : std::span<const double>{};
    }
    std::span<const double> terminal_state() const noexcept { return state(n_steps()); }

private:
    const BrownianBatch* brownian_;
    const ForwardBatch* forward_;
    std::size_t m_;
};

/// ΔB ~ N(0, dt I), keyed by (seed, path, step, coordinate, stream) so that a path
/// does not depend on how many other paths are drawn or on the thread count.
BrownianBatch sample_brownian(const TimeGrid& grid, std::size_t n_paths, int dim, std::uint64_t seed,
                              std::uint32_t stream = 0, int threads = 1);

/// Cumulative Brownian values x0 + (B_{t_i} - B_{t_0}); n = d.
ForwardBatch brownian_states(const BrownianBatch& batch, std::span<const double> x0, int threads = 1);

/// Euler-Maruyama: X_{i+1} = X_i + b(t_i,X_i) dt + σ(t_i,X_i) ΔB_i.
/// Throws NumericalError naming the first path that produced a non-finite state.
ForwardBatch euler_maruyama(const SdeModel& model, std::span<const double> x0, const BrownianBatch& batch,
                            int threads = 1);

/// Same, but with a per-path starting point (row-major [path][coordinate]).
ForwardBatch euler_maruyama(const SdeModel& model, std::span<const double> x0_per_path, const BrownianBatch& batch,
                            bool per_path, int threads);

/// First grid index k with |B_{t_k} - B_{t_0}| + Σ_{i<k} |g(t_i, x_i, 0, 0)|^2 dt > barrier,
/// or n_steps when the barrier is never crossed. States default to the displacement path.
std::size_t stopping_index(const BrownianBatch& batch, std::size_t m, const Generator& g,
                           const ForwardBatch* states = nullptr, double barrier = 1.0);

}  // namespace bsdelab
