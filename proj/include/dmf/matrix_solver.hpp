#pragma once

// Closed-form end-to-end minimizer of l2-regularized deep matrix
// factorization. The factored problem is equivalent to
//
//   min_M ||M_target - M||_F^2 + lambda sum_i sigma_i(M)^(2/L),
//
// whose minimizer keeps the target's singular vectors and applies the scalar
// prox to each singular value independently.

#include "dmf/core_types.hpp"
#include "dmf/factor_stack.hpp"
#include "dmf/scalar_prox.hpp"

#include <string>
#include <vector>

namespace dmf {

struct MatrixSolution {
    Matrix m_star;
    OrderedSvd svd;                     ///< SVD of the target
    Vector sigma_star;                  ///< singular values of m_star, aligned with svd
    std::vector<ProxResult> prox_results;
    bool unique = true;
    bool on_measure_zero_set = false;
    std::vector<Eigen::Index> offending_indices;  ///< 1-based
    double objective_value = 0;
    /// Diagnostic notes, e.g. when the target violates the strict-saddle
    /// condition. Never affects the solution.
    std::vector<std::string> warnings;
};

struct MeasureZeroReport {
    bool hit = false;
    std::vector<Eigen::Index> indices;  ///< 1-based positions in sigma(target)
};

/// ||target - m||_F^2 + lambda * schatten_q(m, 2/L).
double objective_end2end(const Matrix& m, const ProblemSpec& spec);

MatrixSolution solve_closed_form(const ProblemSpec& spec, const Tolerances& tol = {});

/// Whether some singular value of the target lies in [m_bar(1-eps), m_bar(1+eps)].
/// Always false for L <= 2.
MeasureZeroReport is_on_measure_zero_set(const ProblemSpec& spec, double eps = 1e-9);

/// Balanced stack with product m_star: W_L = U S^(1/L), middle layers S^(1/L),
/// W_1 = S^(1/L) V^T, each block embedded top-left in its layer shape.
FactorStack balanced_factors(const Matrix& m_star, const Dims& dims);

/// g* = sqrt(schatten_q(m_star, 2/L)); the Frobenius norm of every layer of
/// every minimizer off the measure-zero set.
double layer_norm_constant(const Matrix& m_star, int depth);

/// 2L ||m_star||_F^2 / g*^2 + (2 lambda / L) N. Reduces to the second term
/// when m_star = 0 or g* = 0.
double trace_lower_bound(const Matrix& m_star, double g_star, const ProblemSpec& spec, const Dims& dims);

/// The strict-saddle constant c_L with which the landscape condition reads
/// lambda^L != sigma_i * c_L. Requires L >= 3.
double strict_saddle_constant(int depth);

}  // namespace dmf
