#include "bsdelab/paths.hpp"

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/rng.hpp"

#include <cmath>
#include <string>

namespace bsdelab {

TimeGrid::TimeGrid(double t_start, double t_end, std::size_t n_steps)
    : t_start_(t_start), t_end_(t_end), n_steps_(n_steps), dt_(0.0) {
    require(std::isfinite(t_start) && std::isfinite(t_end) && t_start < t_end,
            "time grid needs finite t_start < t_end");
    require(n_steps >= 1, "time grid needs at least one step");
    dt_ = (t_end - t_start) / static_cast<double>(n_steps);
    require(dt_ > 0.0, "time grid step underflows");
}

BrownianBatch::BrownianBatch(TimeGrid grid, std::size_t n_paths, int dim, std::uint64_t seed,
                             std::uint32_t stream, std::vector<double> increments)
    : grid_(grid), n_paths_(n_paths), dim_(dim), seed_(seed), stream_(stream),
      increments_(std::move(increments)) {
    require(increments_.size() == n_paths_ * grid_.n_steps() * static_cast<std::size_t>(dim_),
            "Brownian increment array has the wrong size");
}

double BrownianBatch::displacement(std::size_t m, std::size_t i, int k) const noexcept {
    double s = 0.0;
    for (std::size_t j = 0; j < i; ++j) s += increment(m, j)[static_cast<std::size_t>(k)];
    return s;
}

ForwardBatch::ForwardBatch(TimeGrid grid, std::size_t n_paths, int dim, std::vector<double> states)
    : grid_(grid), n_paths_(n_paths), dim_(dim), states_(std::move(states)) {
    require(dim_ >= 0, "forward dimension must be nonnegative");
    require(states_.size() == n_paths_ * (grid_.n_steps() + 1) * static_cast<std::size_t>(dim_),
            "forward state array has the wrong size");
}

SdeModel SdeModel::arithmetic(int dim, double mu, double sigma) {
    SdeModel model;
    model.n = dim;
    model.d = dim;
    model.drift = [mu](double, std::span<const double>, std::span<double> out) {
        for (auto& e : out) e = mu;
    };
    model.diffusion = [dim, sigma](double, std::span<const double>, std::span<double> out) {
        for (auto& e : out) e = 0.0;
        for (int k = 0; k < dim; ++k) out[static_cast<std::size_t>(k * dim + k)] = sigma;
    };
    return model;
}

SdeModel SdeModel::geometric(double mu, double sigma) {
    SdeModel model;
    model.drift = [mu](double, std::span<const double> x, std::span<double> out) { out[0] = mu * x[0]; };
    model.diffusion = [sigma](double, std::span<const double> x, std::span<double> out) {
        out[0] = sigma * x[0];
    };
    return model;
}

BrownianBatch sample_brownian(const TimeGrid& grid, std::size_t n_paths, int dim, std::uint64_t seed,
                              std::uint32_t stream, int threads) {
    require(n_paths >= 1, "sample_brownian needs at least one path");
    require(dim >= 1, "sample_brownian needs a positive dimension");
    require(n_paths <= 0xFFFFFFFFull && grid.n_steps() <= 0xFFFFFFFFull,
            "sample_brownian: path or step count exceeds the RNG counter range");
    const std::size_t d = static_cast<std::size_t>(dim);
    const std::size_t steps = grid.n_steps();
    const double scale = std::sqrt(grid.dt());
    std::vector<double> inc(n_paths * steps * d);
    for_each_block(n_paths, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            for (std::size_t i = 0; i < steps; ++i) {
                double* out = inc.data() + (i * n_paths + m) * d;
                for (std::size_t k = 0; k < d; k += 2) {
                    const auto z = normal_pair(seed, static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(i),
                                               static_cast<std::uint32_t>(k / 2), stream);
                    out[k] = scale * z[0];
                    if (k + 1 < d) out[k + 1] = scale * z[1];
                }
            }
        }
    });
    return BrownianBatch(grid, n_paths, dim, seed, stream, std::move(inc));
}

ForwardBatch brownian_states(const BrownianBatch& batch, std::span<const double> x0, int threads) {
    const std::size_t d = static_cast<std::size_t>(batch.dim());
    const std::size_t paths = batch.n_paths();
    const bool per_path = x0.size() == paths * d && paths > 1;
    require(x0.size() == d || per_path, "brownian_states: starting point has the wrong dimension");
    std::vector<double> states(paths * (batch.n_steps() + 1) * d);
    for_each_block(paths, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            const double* start = per_path ? x0.data() + m * d : x0.data();
            double* s = states.data() + m * d;
            for (std::size_t k = 0; k < d; ++k) s[k] = start[k];
            for (std::size_t i = 0; i < batch.n_steps(); ++i) {
                const double* cur = states.data() + (i * paths + m) * d;
                double* next = states.data() + ((i + 1) * paths + m) * d;
                const auto inc = batch.increment(m, i);
                for (std::size_t k = 0; k < d; ++k) next[k] = cur[k] + inc[k];
            }
        }
    });
    return ForwardBatch(batch.grid(), paths, batch.dim(), std::move(states));
}

ForwardBatch euler_maruyama(const SdeModel& model, std::span<const double> x0_in, const BrownianBatch& batch,
                            bool per_path, int threads) {
    require(model.n >= 1 && model.d >= 1, "SDE dimensions must be positive");
    require(model.d == batch.dim(), "SDE noise dimension does not match the Brownian batch");
    require(static_cast<bool>(model.drift) && static_cast<bool>(model.diffusion),
            "SDE model needs drift and diffusion");
    const std::size_t n = static_cast<std::size_t>(model.n);
    const std::size_t d = static_cast<std::size_t>(model.d);
    const std::size_t paths = batch.n_paths();
    require(per_path ? x0_in.size() == paths * n : x0_in.size() == n,
            "euler_maruyama: starting point has the wrong dimension");
    const TimeGrid& grid = batch.grid();
    const double dt = grid.dt();
    std::vector<double> states(paths * (grid.n_steps() + 1) * n);
    std::vector<std::size_t> bad_path(block_count(paths), paths);

    for_each_block(paths, threads, [&](std::size_t block, std::size_t begin, std::size_t end) {
        std::vector<double> b(n), sig(n * d);
        for (std::size_t m = begin; m < end && bad_path[block] == paths; ++m) {
            const double* start = per_path ? x0_in.data() + m * n : x0_in.data();
            std::copy(start, start + n, states.begin() + static_cast<std::ptrdiff_t>(m * n));
            for (std::size_t i = 0; i < grid.n_steps(); ++i) {
                const std::span<const double> x{states.data() + (i * paths + m) * n, n};
                double* next = states.data() + ((i + 1) * paths + m) * n;
                const double t = grid.time(i);
                model.drift(t, x, b);
                model.diffusion(t, x, sig);
                const auto inc = batch.increment(m, i);
                bool finite = true;
                for (std::size_t r = 0; r < n; ++r) {
                    double v = x[r] + b[r] * dt;
                    for (std::size_t c = 0; c < d; ++c) v += sig[r * d + c] * inc[c];
                    next[r] = v;
                    finite = finite && std::isfinite(v);
                }
                if (!finite) {
                    bad_path[block] = m;
                    break;
                }
            }
        }
    });
    for (std::size_t m : bad_path) {
        if (m != paths) {
            throw NumericalError("euler_maruyama: non-finite state on path " + std::to_string(m), "NAN");
        }
    }
    return ForwardBatch(grid, paths, model.n, std::move(states));
}

ForwardBatch euler_maruyama(const SdeModel& model, std::span<const double> x0, const BrownianBatch& batch,
                            int threads) {
    return euler_maruyama(model, x0, batch, false, threads);
}

std::size_t stopping_index(const BrownianBatch& batch, std::size_t m, const Generator& g,
                           const ForwardBatch* states, double barrier) {
    const TimeGrid& grid = batch.grid();
    const std::size_t d = static_cast<std::size_t>(batch.dim());
    const double dt = grid.dt();
    std::vector<double> disp(d, 0.0), zero(d, 0.0);
    double integral = 0.0;
    for (std::size_t k = 1; k <= grid.n_steps(); ++k) {
        const std::span<const double> x = states ? states->state(m, k - 1) : std::span<const double>(disp);
        const double g0 = g(grid.time(k - 1), x, 0.0, zero);
        integral += g0 * g0 * dt;
        const auto inc = batch.increment(m, k - 1);
        double sq = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            disp[c] += inc[c];
            sq += disp[c] * disp[c];
        }
        if (std::sqrt(sq) + integral > barrier) return k;
    }
    return grid.n_steps();
}

}  // namespace bsdelab
