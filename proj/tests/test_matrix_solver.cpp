#include "dmf/experiments.hpp"
#include "dmf/gd_trainer.hpp"
#include "dmf/matrix_solver.hpp"
#include "dmf/oracles.hpp"
#include "dmf/scalar_prox.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dmf;

namespace {

Matrix with_singular_values(Eigen::Index rows, Eigen::Index cols, const Vector& s, std::uint64_t seed) {
    const OrderedSvd basis = svd_ordered(gaussian_matrix(rows, cols, seed));
    return basis.compose(s);
}

}  // namespace

TEST(SolveClosedForm, AppliesProxPerSingularValue) {
    const Matrix target = gaussian_matrix(4, 6, 1) * 2;
    for (int depth : {1, 2, 3, 5}) {
        const ProblemSpec spec(target, depth, 1.3);
        const MatrixSolution sol = solve_closed_form(spec);
        const Vector got = singular_values(sol.m_star);
        for (Eigen::Index i = 0; i < got.size(); ++i) {
            EXPECT_NEAR(got(i), prox_scalar(sol.svd.sigma(i), 1.3, depth).minimizer, 1e-10);
            EXPECT_NEAR(sol.sigma_star(i), got(i), 1e-10);
        }
        // Same singular vectors as the target.
        const Matrix d = sol.svd.u.transpose() * sol.m_star * sol.svd.v;
        Matrix off = d;
        for (Eigen::Index i = 0; i < std::min(off.rows(), off.cols()); ++i) off(i, i) = 0;
        EXPECT_LE(off.norm(), 1e-10);
        EXPECT_NEAR(sol.objective_value, objective_end2end(sol.m_star, spec), 1e-10);
    }
}

TEST(SolveClosedForm, BeatsPerturbations) {
    const Matrix target = gaussian_matrix(3, 4, 2) * 1.5;
    const ProblemSpec spec(target, 3, 0.8);
    const MatrixSolution sol = solve_closed_form(spec);
    for (int k = 0; k < 200; ++k) {
        const Matrix other = sol.m_star + 1e-2 * gaussian_matrix(3, 4, 50 + k);
        EXPECT_GE(objective_end2end(other, spec), sol.objective_value - 1e-12);
    }
    EXPECT_GE(objective_end2end(Matrix::Zero(3, 4), spec), sol.objective_value);
}

TEST(SolveClosedForm, CollapsesAboveTau) {
    const Matrix target = gaussian_matrix(5, 5, 3);
    const double tau = collapse_lambda(singular_values(target)(0), 4);
    EXPECT_TRUE(solve_closed_form(ProblemSpec(target, 4, tau * 1.001)).m_star.isZero(0));
    EXPECT_GT(solve_closed_form(ProblemSpec(target, 4, tau * 0.999)).m_star.norm(), 0);
}

TEST(SolveClosedForm, RankDeficientTarget) {
    Vector s(3);
    s << 4, 2, 0;
    const Matrix target = with_singular_values(3, 5, s, 4);
    const MatrixSolution sol = solve_closed_form(ProblemSpec(target, 3, 0.5));
    EXPECT_EQ(sol.sigma_star(2), 0.0);
    EXPECT_TRUE(sol.unique);
}

TEST(SolveClosedForm, RepeatedSingularValuesStayRepeated) {
    Vector s(4);
    s << 3, 2, 2, 0.5;
    const MatrixSolution sol = solve_closed_form(ProblemSpec(with_singular_values(4, 4, s, 5), 3, 1.0));
    EXPECT_NEAR(sol.sigma_star(1), sol.sigma_star(2), 1e-12);
}

TEST(MeasureZero, FlagsSingularValueOnThreshold) {
    const double lambda = 4;
    Vector s(3);
    s << 5, threshold_m_bar(lambda, 3), 0.5;
    const ProblemSpec spec(with_singular_values(3, 3, s, 6), 3, lambda);
    const MeasureZeroReport report = is_on_measure_zero_set(spec);
    EXPECT_TRUE(report.hit);
    ASSERT_EQ(report.indices.size(), 1u);
    EXPECT_EQ(report.indices[0], 2);

    const MatrixSolution sol = solve_closed_form(spec);
    EXPECT_FALSE(sol.unique);
    EXPECT_TRUE(sol.on_measure_zero_set);
    EXPECT_EQ(sol.offending_indices, std::vector<Eigen::Index>{2});
}

TEST(MeasureZero, NeverForShallowDepth) {
    const ProblemSpec spec(Matrix::Identity(2, 2) * 0.5, 2, 1.0);
    EXPECT_FALSE(is_on_measure_zero_set(spec).hit);
}

TEST(BalancedFactors, ReproducesProductAndBalance) {
    const Matrix target = gaussian_matrix(3, 5, 7);
    for (int depth : {1, 2, 3, 4}) {
        const ProblemSpec spec(target, depth, 0.4);
        const MatrixSolution sol = solve_closed_form(spec);
        const Dims dims = uniform_dims(3, 5, depth, 4);
        const FactorStack stack = balanced_factors(sol.m_star, dims);
        EXPECT_EQ(stack.dims(), dims);
        EXPECT_LE((stack.product() - sol.m_star).norm(), 1e-12 * (1 + sol.m_star.norm()));
        EXPECT_LE(balance_gap(stack), 1e-12);
        const double g = layer_norm_constant(sol.m_star, depth);
        for (double n : stack.layer_norms()) EXPECT_NEAR(n, g, 1e-12 * (1 + g));
        EXPECT_NEAR(objective(stack, spec), sol.objective_value, 1e-10 * (1 + sol.objective_value));
    }
}

TEST(BalancedFactors, RejectsNarrowDims) {
    const Matrix m = gaussian_matrix(3, 3, 8);
    EXPECT_THROW(balanced_factors(m, {3, 2, 3}), InputError);
}

TEST(TraceBound, HoldsAtBalancedMinimizer) {
    const Matrix target = gaussian_matrix(3, 4, 9);
    const ProblemSpec spec(target, 3, 0.7);
    const MatrixSolution sol = solve_closed_form(spec);
    const Dims dims = uniform_dims(3, 4, 3, 5);
    const double bound = trace_lower_bound(sol.m_star, layer_norm_constant(sol.m_star, 3), spec, dims);
    EXPECT_GE(hessian_trace_exact(balanced_factors(sol.m_star, dims), spec), bound - 1e-9 * bound);
    EXPECT_THROW(trace_lower_bound(sol.m_star, 1.0, spec, {4, 3}), InputError);
}

TEST(TraceBound, ZeroMinimizerKeepsRidgeTerm) {
    const ProblemSpec spec(Matrix::Identity(2, 2) * 0.1, 3, 2.0);
    const MatrixSolution sol = solve_closed_form(spec);
    ASSERT_TRUE(sol.m_star.isZero(0));
    const Dims dims = uniform_dims(2, 2, 3, 2);
    EXPECT_DOUBLE_EQ(trace_lower_bound(sol.m_star, 0.0, spec, dims), 2 * 2.0 / 3 * parameter_count(dims));
}

TEST(StrictSaddle, ConstantNeedsDepthThree) {
    EXPECT_GT(strict_saddle_constant(3), 0);
    EXPECT_THROW(strict_saddle_constant(2), InputError);
}
