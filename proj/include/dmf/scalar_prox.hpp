#pragma once

// Exact minimizer of the scalar problem
//
//   phi(rho) = (m - rho)^2 + lambda |rho|^q,   q = 2 / L,
//
// which is the end-to-end form of the depth-L scalar factorization
// (m - w_L ... w_1)^2 + (lambda / L) sum_i w_i^2, together with the Hessian
// spectrum of the factored objective at its minimizers.

#include "dmf/core_types.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace dmf {

enum class ProxBranch {
    Zero,              ///< |m| below the threshold; rho* = 0
    Interior,          ///< |m| above the threshold; rho* is the local-min root
    Tie,               ///< |m| on the threshold (within tie_tol); two minimizers
    ConvexClosedForm,  ///< L in {1, 2}: ridge or soft threshold
};

std::string_view to_string(ProxBranch branch) noexcept;

struct ProxResult {
    double minimizer = 0;
    std::vector<double> candidates;
    ProxBranch branch = ProxBranch::Zero;
    bool unique = true;
    /// Critical |m| for (lambda, L). For L = 2 this is the soft threshold
    /// lambda / 2, for L = 1 it is 0.
    double threshold_m_bar = 0;
};

struct ScalarSpectrum {
    double bulk_eig = 0;         ///< multiplicity L - 1
    double top_eig = 0;
    double lambda_max = 0;
    double layer_magnitude = 0;  ///< w = |rho*|^(1/L)
    std::vector<double> eigenvalues;  ///< all L eigenvalues, ascending
};

/// phi(rho) for the given (m, lambda, L).
double prox_objective(double rho, double m, double lambda, int depth);

/// m_bar = (1 - q/2) lambda^(1/(2-q)) (1-q)^((q-1)/(2-q)), q = 2/L. Requires L >= 3.
double threshold_m_bar(double lambda, int depth);

/// Inverse of threshold_m_bar in lambda: the regularization at which
/// `magnitude` sits exactly on the threshold. Above it, the prox of
/// `magnitude` is zero.
double collapse_lambda(double magnitude, int depth);

/// Nonzero candidate at the tie, rho_m = (lambda (1-q))^(1/(2-q)).
double tie_candidate(double lambda, int depth);

/// Larger root of phi'(rho) = 2(rho - mag) + lambda q rho^(q-1) on (0, inf),
/// i.e. the positive local minimum of phi, or nullopt when phi is monotone
/// on (0, inf). Requires mag > 0 and 0 < q < 1.
std::optional<double> stationary_root(double mag, double lambda, double q, const Tolerances& tol = {});

ProxResult prox_scalar(double m, double lambda, int depth, const Tolerances& tol = {});

/// Closed-form Hessian spectrum of the depth-L scalar factorization at any
/// of its global minimizers. Requires L >= 3 and |m| off the tie band.
ScalarSpectrum hessian_spectrum_scalar(double m, double lambda, int depth, const Tolerances& tol = {});

}  // namespace dmf
