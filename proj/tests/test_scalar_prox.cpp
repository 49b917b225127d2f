#include "dmf/scalar_prox.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dmf;

// Reference values below were computed independently with 50-digit
// arithmetic and a dense grid, then frozen.

TEST(Threshold, FrozenValues) {
    EXPECT_NEAR(threshold_m_bar(4.0, 3), 2.481612957605598930, 1e-12);
    EXPECT_NEAR(threshold_m_bar(1.0, 4), 0.944940787421154873, 1e-12);
    EXPECT_NEAR(threshold_m_bar(1.0, 4), 0.75 * std::cbrt(2.0), 1e-14);
    EXPECT_NEAR(threshold_m_bar(1.0, 5), 0.968909620439192266, 1e-12);
}

TEST(Threshold, RequiresDepthThree) {
    EXPECT_THROW(threshold_m_bar(1.0, 2), InputError);
    EXPECT_THROW(threshold_m_bar(-1.0, 3), InputError);
}

TEST(Threshold, CollapseLambdaInvertsThreshold) {
    for (int depth : {3, 4, 6}) {
        for (double mag : {0.3, 1.0, 7.5}) {
            EXPECT_NEAR(threshold_m_bar(collapse_lambda(mag, depth), depth), mag, 1e-12 * mag);
        }
    }
}

TEST(Threshold, ValueTieAtThreshold) {
    // phi(0) == phi(rho_m) exactly at m = m_bar.
    for (auto [lambda, depth] : {std::pair{4.0, 3}, std::pair{1.0, 5}, std::pair{0.3, 8}}) {
        const double m = threshold_m_bar(lambda, depth);
        const double rho_m = tie_candidate(lambda, depth);
        EXPECT_NEAR(prox_objective(0, m, lambda, depth), prox_objective(rho_m, m, lambda, depth), 1e-12);
    }
}

TEST(Prox, FrozenInteriorValues) {
    EXPECT_NEAR(prox_scalar(3, 4, 3).minimizer, 1.92888341585089123, 1e-10);
    EXPECT_NEAR(prox_scalar(3, 4, 5).minimizer, 2.54304013393772263, 1e-10);
    EXPECT_NEAR(prox_scalar(5, 1, 4).minimizer, 4.88691035982835322, 1e-10);
    EXPECT_NEAR(prox_scalar(2, 1e-8, 3).minimizer, 1.99999999735433158, 1e-12);
    EXPECT_EQ(prox_scalar(3, 4, 3).branch, ProxBranch::Interior);
    EXPECT_TRUE(prox_scalar(3, 4, 3).unique);
}

TEST(Prox, ShallowClosedForms) {
    for (double m : {-3.0, -0.2, 0.0, 0.7, 4.0}) {
        for (double lambda : {0.1, 1.0, 5.0}) {
            const ProxResult ridge = prox_scalar(m, lambda, 1);
            EXPECT_EQ(ridge.branch, ProxBranch::ConvexClosedForm);
            EXPECT_NEAR(ridge.minimizer, m / (1 + lambda), 1e-15);
            const double soft = std::copysign(std::max(std::abs(m) - lambda / 2, 0.0), m);
            EXPECT_NEAR(prox_scalar(m, lambda, 2).minimizer, soft, 1e-15);
            EXPECT_DOUBLE_EQ(prox_scalar(m, lambda, 2).threshold_m_bar, lambda / 2);
        }
    }
}

TEST(Prox, BelowThresholdIsZero) {
    const ProxResult r = prox_scalar(2.0, 4.0, 3);
    EXPECT_EQ(r.minimizer, 0.0);
    EXPECT_EQ(r.branch, ProxBranch::Zero);
    EXPECT_TRUE(r.unique);
    EXPECT_EQ(prox_scalar(0.0, 1.0, 4).minimizer, 0.0);
}

TEST(Prox, TieReportsBothCandidates) {
    const double lambda = 4, m = threshold_m_bar(lambda, 3);
    const ProxResult r = prox_scalar(m, lambda, 3);
    EXPECT_EQ(r.branch, ProxBranch::Tie);
    EXPECT_FALSE(r.unique);
    ASSERT_EQ(r.candidates.size(), 2u);
    EXPECT_EQ(r.candidates[0], 0.0);
    EXPECT_NEAR(r.candidates[1], tie_candidate(lambda, 3), 1e-9);

    const ProxResult neg = prox_scalar(-m, lambda, 3);
    EXPECT_NEAR(neg.candidates[1], -tie_candidate(lambda, 3), 1e-9);
}

TEST(Prox, OddAndMonotone) {
    for (int depth = 1; depth <= 8; ++depth) {
        double prev = -std::numeric_limits<double>::infinity();
        for (double m = -6; m <= 6; m += 0.01) {
            const double x = prox_scalar(m, 1.5, depth).minimizer;
            EXPECT_DOUBLE_EQ(prox_scalar(-m, 1.5, depth).minimizer, -x);
            EXPECT_GE(x, prev);
            EXPECT_LE(std::abs(x), std::abs(m));
            if (x != 0) EXPECT_GT(x * m, 0);
            prev = x;
        }
    }
}

TEST(Prox, RejectsBadArguments) {
    EXPECT_THROW(prox_scalar(1, 0, 3), InputError);
    EXPECT_THROW(prox_scalar(1, -1, 3), InputError);
    EXPECT_THROW(prox_scalar(1, 1, 0), InputError);
    EXPECT_THROW(prox_scalar(std::nan(""), 1, 3), InputError);
}

TEST(StationaryRoot, MonotoneCaseHasNoRoot) {
    // Far below the inflection point phi is increasing on (0, inf).
    EXPECT_FALSE(stationary_root(0.1, 4.0, 2.0 / 3).has_value());
}

TEST(StationaryRoot, RootSatisfiesFirstOrderCondition) {
    const double q = 2.0 / 3;
    const auto rho = stationary_root(3.0, 4.0, q);
    ASSERT_TRUE(rho.has_value());
    const double dphi = 2 * (*rho - 3.0) + 4.0 * q * std::pow(*rho, q - 1);
    EXPECT_NEAR(dphi, 0.0, 1e-10);
    EXPECT_NEAR(*rho, 1.92888341585089123, 1e-10);
}

TEST(Spectrum, InteriorClosedForm) {
    const double m = 3, lambda = 4;
    const int depth = 3;
    const ScalarSpectrum s = hessian_spectrum_scalar(m, lambda, depth);
    const double w = std::cbrt(1.92888341585089123);
    EXPECT_NEAR(s.layer_magnitude, w, 1e-10);
    EXPECT_NEAR(s.bulk_eig, 4 * lambda / depth, 1e-12);
    EXPECT_NEAR(s.top_eig, 2 * depth * std::pow(w, 4) + 4 * lambda / depth - 2 * lambda, 1e-9);
    ASSERT_EQ(s.eigenvalues.size(), 3u);
    EXPECT_TRUE(std::is_sorted(s.eigenvalues.begin(), s.eigenvalues.end()));
    EXPECT_DOUBLE_EQ(s.lambda_max, s.eigenvalues.back());
}

TEST(Spectrum, ZeroBranchIsIsotropic) {
    const ScalarSpectrum s = hessian_spectrum_scalar(1.0, 4.0, 3);
    for (double e : s.eigenvalues) EXPECT_NEAR(e, 2 * 4.0 / 3, 1e-14);
}

TEST(Spectrum, SmallLambdaLimit) {
    // lambda -> 0: lambda_max -> 2L |m|^(2(1 - 1/L)).
    const ScalarSpectrum s = hessian_spectrum_scalar(2.0, 1e-8, 3);
    EXPECT_NEAR(s.lambda_max, 6 * std::pow(2.0, 4.0 / 3), 1e-6);
}

TEST(Spectrum, TieIsAPreconditionError) {
    EXPECT_THROW(hessian_spectrum_scalar(threshold_m_bar(4.0, 3), 4.0, 3), PreconditionError);
    EXPECT_THROW(hessian_spectrum_scalar(1.0, 1.0, 2), InputError);
}
