#pragma once

// Brute-force references for the closed-form routines. None of these call
// into the code paths they are used to check.

#include "dmf/core_types.hpp"
#include "dmf/factor_stack.hpp"

#include <cstdint>
#include <vector>

namespace dmf {

struct GridSpec {
    double lo = -1;
    double hi = 1;
    int coarse_steps = 100000;
    int refine_rounds = 3;
    int refine_factor = 100;

    /// Symmetric interval [-(|m| + 1), |m| + 1].
    static GridSpec around(double m);
    void validate() const;
    /// (hi - lo) / (coarse_steps * refine_factor^refine_rounds).
    double resolution() const;
};

/// Exhaustive grid minimization of (m - rho)^2 + lambda |rho|^(2/L) with
/// iterative refinement around the running argmin.
double prox_grid_oracle(double m, double lambda, int depth, const GridSpec& grid);
double prox_grid_oracle(double m, double lambda, int depth);

struct FiberSample {
    double min_value = 0;       ///< min over sampled stacks of (1/L) sum ||W_i||_F^2
    double balanced_value = 0;  ///< same quantity at the balanced starting point
    int rejected = 0;           ///< gauge draws discarded for conditioning
    std::vector<double> values;        ///< per-sample (1/L) sum ||W_i||_F^2
    std::vector<double> balance_gaps;  ///< per-sample balance_gap
};

/// Samples the fiber {W : W_L ... W_1 = x} by random gauge transforms
/// W_{i+1} <- W_{i+1} G_i^{-1}, W_i <- G_i W_i applied to the balanced
/// factorization, with G_i = I + 0.5 * Gaussian and cond(G_i) <= 10. The
/// balanced start is included among the candidates.
FiberSample fiber_sample(const Matrix& x, const Dims& dims, int samples, std::uint64_t seed);
double fiber_sample_oracle(const Matrix& x, const Dims& dims, int samples, std::uint64_t seed);

/// Central differences of the factored objective, coordinate by coordinate.
FactorStack finite_diff_gradient(const ProblemSpec& spec, const FactorStack& stack, double step = 1e-6);

}  // namespace dmf
