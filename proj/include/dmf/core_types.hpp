#pragma once

// Shared vocabulary for the deep-factorization solver: problem definition,
// ordered SVD, Schatten quasi-norms and the von Neumann trace gap.

#include <Eigen/Dense>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace dmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad arguments or malformed input. Maps to CLI exit code 2.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An operation was called outside its documented domain (e.g. a tie point).
class PreconditionError : public InputError {
public:
    using InputError::InputError;
};

/// A numerical routine failed to converge or produced an inconsistent result.
/// Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Tolerances {
    double root_tol = 1e-12;  ///< absolute bracket width for scalar roots
    double tie_tol  = 1e-9;   ///< relative band around the prox threshold
    double svd_tol  = 1e-10;  ///< orthogonality check on SVD factors
    double rank_tol = 1e-12;  ///< sigma_i <= rank_tol * sigma_1 counts as zero

    void validate() const;
};

/// Target matrix, depth L and regularization strength of the factored problem
///   || M - W_L ... W_1 ||_F^2 + (lambda / L) sum_i ||W_i||_F^2.
class ProblemSpec {
public:
    ProblemSpec(Matrix target, int depth, double lambda);

    const Matrix& target() const noexcept { return target_; }
    int depth() const noexcept { return depth_; }
    double lambda() const noexcept { return lambda_; }
    /// Schatten exponent of the equivalent end-to-end problem, 2 / L.
    double q() const noexcept { return q_; }

    Eigen::Index rows() const noexcept { return target_.rows(); }
    Eigen::Index cols() const noexcept { return target_.cols(); }

    ProblemSpec with_lambda(double lambda) const { return {target_, depth_, lambda}; }

private:
    Matrix target_;
    int depth_;
    double lambda_;
    double q_;
};

/// Full SVD m = u * diag(sigma) * v^T with u (rows x rows), v (cols x cols)
/// orthogonal and sigma non-increasing. Each left singular vector is signed
/// so that its largest-magnitude entry is positive.
struct OrderedSvd {
    Matrix u;
    Vector sigma;
    Matrix v;

    Eigen::Index rank_capacity() const noexcept { return sigma.size(); }
    /// u * diag(s) * v^T, with s embedded in the top-left block.
    Matrix compose(const Vector& s) const;
    Matrix reconstruct() const { return compose(sigma); }
};

OrderedSvd svd_ordered(const Matrix& m, const Tolerances& tol = {});

/// Singular values only (non-increasing).
Vector singular_values(const Matrix& m);

/// sum_i sigma_i(m)^q with 0^q = 0, for q in (0, 2]. Singular values at or
/// below Tolerances::rank_tol * sigma_max count as zero.
double schatten_q(const Matrix& m, double q);
double schatten_q_sigma(const Vector& sigma, double q);

/// sum_i sigma_i(a) sigma_i(b) - tr(a b^T). Non-negative up to rounding.
double von_neumann_gap(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

// Plain CSV, one matrix row per line, no header.
Matrix read_matrix_csv(const std::filesystem::path& path);
Matrix parse_matrix_csv(const std::string& text);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

}  // namespace dmf
