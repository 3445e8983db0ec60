#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace bsdelab {

/// Standardized monomial basis description, detached from any design matrix.
struct BasisDescriptor {
    int n_features = 0;
    int degree = 0;
    std::vector<int> active;
    std::vector<double> center;
    std::vector<double> scale;
    std::vector<std::vector<int>> exponents;

    std::size_t size() const noexcept { return exponents.size(); }
    /// Basis functions at a raw (unstandardized) feature vector.
    Eigen::VectorXd evaluate(std::span<const double> raw_features) const;
};

/// Least-squares projection onto total-degree monomials of the standardized
/// state, fitted once per time step and reused for several right-hand sides.
///
/// Features with (numerically) zero spread are dropped before the basis is
/// formed. If the normal matrix condition number exceeds the threshold, the
/// degree is lowered until it does not; degree 0 always succeeds.
class StepRegression {
public:
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    /// features: row-major [path][feature], n_features columns (may be 0).
    StepRegression(std::span<const double> features, std::size_t n_paths, int n_features, int degree,
                   double cond_threshold, int threads);

    int requested_degree() const noexcept { return requested_degree_; }
    int degree() const noexcept { return basis_.degree; }
    std::size_t basis_size() const noexcept { return basis_.size(); }
    double condition_number() const noexcept { return condition_; }
    const BasisDescriptor& basis() const noexcept { return basis_; }

    /// Coefficients (basis_size x R) for targets given column-major [R][path].
    Eigen::MatrixXd fit(std::span<const double> targets, int n_targets) const;

    /// Fitted values design * coeffs(:, r) for every path.
    void predict_all(const Eigen::MatrixXd& coeffs, int r, std::span<double> out) const;

private:
    void build_design(std::span<const double> features, int degree);

    std::size_t n_paths_;
    int requested_degree_;
    int threads_;
    BasisDescriptor basis_;
    RowMatrix design_;
    Eigen::LDLT<Eigen::MatrixXd> gram_ldlt_;
    double condition_ = 1.0;
};

/// Exponent tuples of all monomials in n variables with total degree <= degree,
/// ordered by total degree.
std::vector<std::vector<int>> monomial_exponents(int n, int degree);

}  // namespace bsdelab
