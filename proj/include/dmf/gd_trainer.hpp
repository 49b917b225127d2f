#pragma once

// Factored objective, its gradient and Hessian diagnostics, and full-batch
// gradient descent used to check closed-form predictions empirically.

#include "dmf/core_types.hpp"
#include "dmf/factor_stack.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dmf {

struct GdConfig {
    double step_size = 1e-2;
    int max_iters = 5000;
    double init_scale = 1.0;
    std::uint64_t seed = 0;
    double grad_tol = 1e-8;
    Dims dims;

    void validate() const;
};

struct TrainTrace {
    std::vector<double> objective_history;    ///< objective at iterate t, before step t
    std::vector<double> product_fro_history;  ///< ||W_L ... W_1||_F at iterate t
    FactorStack final_stack;
    double final_objective = 0;
    double final_grad_norm = 0;
    /// Gradient norm reached grad_tol.
    bool converged = false;
    /// Stopped early because the objective exceeded 1e3x its initial value
    /// or became non-finite.
    bool diverged = false;
    GdConfig config;

    /// Whether objective_history is non-increasing up to `slack` per step.
    bool monotone(double slack = 1e-12) const;
};

/// ||target - W_L ... W_1||_F^2 + (lambda / L) sum_i ||W_i||_F^2.
double objective(const FactorStack& stack, const ProblemSpec& spec);

/// dL/dW_k = 2 A_k^T (A_k W_k B_k - target) B_k^T + (2 lambda / L) W_k with
/// A_k = W_L ... W_{k+1} and B_k = W_{k-1} ... W_1.
FactorStack gradient(const FactorStack& stack, const ProblemSpec& spec);

/// Objective and gradient in one pass.
double objective_and_gradient(const FactorStack& stack, const ProblemSpec& spec, FactorStack& grad);

/// Gaussian initialization: entries of W_i ~ N(0, 1) * init_scale / sqrt(d_{i-1}).
FactorStack random_stack(const Dims& dims, double init_scale, std::uint64_t seed);

TrainTrace gd_run(const ProblemSpec& spec, const GdConfig& config);

/// Runs every config and returns the trace with the smallest final
/// objective; ties go to the lowest grid index. `threads` = 0 uses the
/// hardware concurrency. The result does not depend on scheduling.
TrainTrace gd_grid_search(const ProblemSpec& spec, std::span<const GdConfig> grid, unsigned threads = 0);

/// step_size x init_scale x seed cross product.
std::vector<GdConfig> make_grid(const Dims& dims, const std::vector<double>& step_sizes,
                                const std::vector<double>& init_scales, const std::vector<std::uint64_t>& seeds,
                                int max_iters, double grad_tol = 1e-8);

/// Six step sizes x three init scales x seeds 0..19.
std::vector<GdConfig> default_grid(const Dims& dims, int max_iters = 5000);

/// Three step sizes x two init scales x five seeds.
std::vector<GdConfig> desk_grid(const Dims& dims, int max_iters = 3000);

/// Exact Hessian trace: (2 lambda / L) N + sum_k 2 ||A_k||_F^2 ||B_k||_F^2.
double hessian_trace_exact(const FactorStack& stack, const ProblemSpec& spec);

/// Central second differences of the objective over the flattened
/// parameters with per-coordinate step h_j = step (1 + |w_j|), symmetrized.
/// Requires N <= 400.
Matrix hessian_fd(const ProblemSpec& spec, const FactorStack& stack, double step = 1e-4);

/// Same, without the final symmetrization.
Matrix hessian_fd_raw(const ProblemSpec& spec, const FactorStack& stack, double step = 1e-4);

/// max_i ||W_{i+1}^T W_{i+1} - W_i W_i^T||_F / (1 + ||W_i W_i^T||_F); 0 for L = 1.
double balance_gap(const FactorStack& stack);

constexpr Eigen::Index kMaxFdParameters = 400;

}  // namespace dmf
