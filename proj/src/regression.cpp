#include "bsdelab/regression.hpp"

#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"

#include <cmath>
#include <limits>

namespace bsdelab {

std::vector<std::vector<int>> monomial_exponents(int n, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> current(static_cast<std::size_t>(n), 0);
    // Enumerate by total degree so lower-order terms come first.
    for (int total = 0; total <= degree; ++total) {
        const auto recurse = [&](auto&& self, int var, int remaining) -> void {
            if (var == n - 1) {
                current[static_cast<std::size_t>(var)] = remaining;
                out.push_back(current);
                return;
            }
            for (int e = remaining; e >= 0; --e) {
                current[static_cast<std::size_t>(var)] = e;
                self(self, var + 1, remaining - e);
            }
        };
        if (n == 0) {
            if (total == 0) out.emplace_back();
            continue;
        }
        recurse(recurse, 0, total);
    }
    return out;
}

StepRegression::StepRegression(std::span<const double> features, std::size_t n_paths, int n_features,
                               int degree, double cond_threshold, int threads)
    : n_paths_(n_paths), requested_degree_(degree), threads_(threads) {
    basis_.n_features = n_features;
    require(n_paths >= 1, "regression needs at least one path");
    require(features.size() == n_paths * static_cast<std::size_t>(n_features),
            "regression feature array has the wrong size");
    const std::size_t nf = static_cast<std::size_t>(n_features);
    for (std::size_t k = 0; k < nf; ++k) {
        double mean = 0.0;
        for (std::size_t m = 0; m < n_paths; ++m) mean += features[m * nf + k];
        mean /= static_cast<double>(n_paths);
        double var = 0.0;
        for (std::size_t m = 0; m < n_paths; ++m) {
            const double e = features[m * nf + k] - mean;
            var += e * e;
        }
        const double sd = std::sqrt(var / static_cast<double>(n_paths));
        if (sd > 1e-12 * (1.0 + std::abs(mean))) {
            basis_.active.push_back(static_cast<int>(k));
            basis_.center.push_back(mean);
            basis_.scale.push_back(sd);
        }
    }

    for (int deg = basis_.active.empty() ? 0 : degree; deg >= 0; --deg) {
        build_design(features, deg);
        const std::size_t kb = basis_.size();
        const std::size_t blocks = block_count(n_paths_);
        std::vector<Eigen::MatrixXd> partial(blocks);
        for_each_block(n_paths_, threads_, [&](std::size_t b, std::size_t begin, std::size_t end) {
            const auto rows = design_.middleRows(static_cast<Eigen::Index>(begin),
                                                 static_cast<Eigen::Index>(end - begin));
            partial[b] = rows.transpose() * rows;
        });
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kb), static_cast<Eigen::Index>(kb));
        for (const auto& p : partial) gram += p;
        gram /= static_cast<double>(n_paths_);

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        if (condition_ <= cond_threshold || deg == 0) {
            basis_.degree = deg;
            gram_ldlt_.compute(gram);
            if (gram_ldlt_.info() != Eigen::Success || !std::isfinite(condition_)) {
                throw NumericalError("regression normal matrix is singular even at degree 0", "CONDITIONING");
            }
            return;
        }
    }
}

void StepRegression::build_design(std::span<const double> features, int degree) {
    basis_.degree = degree;
    basis_.exponents = monomial_exponents(static_cast<int>(basis_.active.size()), degree);
    const auto& exponents = basis_.exponents;
    const std::size_t kb = exponents.size();
    const std::size_t nf = static_cast<std::size_t>(basis_.n_features);
    const std::size_t na = basis_.active.size();
    design_.resize(static_cast<Eigen::Index>(n_paths_), static_cast<Eigen::Index>(kb));
    for_each_block(n_paths_, threads_, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<std::vector<double>> powers(na, std::vector<double>(static_cast<std::size_t>(degree) + 1));
        for (std::size_t m = begin; m < end; ++m) {
            for (std::size_t a = 0; a < na; ++a) {
                const double v = (features[m * nf + static_cast<std::size_t>(basis_.active[a])] - basis_.center[a]) / basis_.scale[a];
                powers[a][0] = 1.0;
                for (int p = 1; p <= degree; ++p) powers[a][static_cast<std::size_t>(p)] = powers[a][static_cast<std::size_t>(p - 1)] * v;
            }
            for (std::size_t j = 0; j < kb; ++j) {
                double value = 1.0;
                for (std::size_t a = 0; a < na; ++a) value *= powers[a][static_cast<std::size_t>(exponents[j][a])];
                design_(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) = value;
            }
        }
    });
}

Eigen::MatrixXd StepRegression::fit(std::span<const double> targets, int n_targets) const {
    require(targets.size() == n_paths_ * static_cast<std::size_t>(n_targets), "regression target array has the wrong size");
    const Eigen::Index kb = static_cast<Eigen::Index>(basis_.size());
    const std::size_t blocks = block_count(n_paths_);
    std::vector<Eigen::MatrixXd> partial(blocks);
    for_each_block(n_paths_, threads_, [&](std::size_t b, std::size_t begin, std::size_t end) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(kb, n_targets);
        for (std::size_t m = begin; m < end; ++m) {
            const auto row = design_.row(static_cast<Eigen::Index>(m));
            for (int r = 0; r < n_targets; ++r) {
                acc.col(r) += targets[static_cast<std::size_t>(r) * n_paths_ + m] * row.transpose();
            }
        }
        partial[b] = std::move(acc);
    });
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(kb, n_targets);
    for (const auto& p : partial) rhs += p;
    rhs /= static_cast<double>(n_paths_);
    return gram_ldlt_.solve(rhs);
}

void StepRegression::predict_all(const Eigen::MatrixXd& coeffs, int r, std::span<double> out) const {
    require(out.size() == n_paths_, "regression output array has the wrong size");
    const Eigen::VectorXd c = coeffs.col(r);
    for_each_block(n_paths_, threads_, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) out[m] = design_.row(static_cast<Eigen::Index>(m)).dot(c);
    });
}

Eigen::VectorXd BasisDescriptor::evaluate(std::span<const double> raw) const {
    require(raw.size() == static_cast<std::size_t>(n_features), "basis: wrong feature dimension");
    Eigen::VectorXd out(static_cast<Eigen::Index>(exponents.size()));
    for (std::size_t j = 0; j < exponents.size(); ++j) {
        double value = 1.0;
        for (std::size_t a = 0; a < active.size(); ++a) {
            const double v = (raw[static_cast<std::size_t>(active[a])] - center[a]) / scale[a];
            value *= std::pow(v, exponents[j][a]);
        }
        out(static_cast<Eigen::Index>(j)) = value;
    }
    return out;
}

}  // namespace bsdelab
