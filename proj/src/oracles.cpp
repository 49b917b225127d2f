#include "dmf/oracles.hpp"

#include "dmf/gd_trainer.hpp"
#include "dmf/matrix_solver.hpp"
#include "parallel.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace dmf {

GridSpec GridSpec::around(double m) {
    const double half = std::abs(m) + 1;
    return {.lo = -half, .hi = half};
}

void GridSpec::validate() const {
    if (!(lo < hi)) throw InputError("grid needs lo < hi");
    if (coarse_steps < 1000) throw InputError("grid needs at least 1000 coarse steps");
    if (refine_rounds < 0 || refine_factor < 2) throw InputError("invalid grid refinement");
}

double GridSpec::resolution() const {
    return (hi - lo) / (static_cast<double>(coarse_steps) * std::pow(static_cast<double>(refine_factor), refine_rounds));
}

double prox_grid_oracle(double m, double lambda, int depth, const GridSpec& grid) {
    grid.validate();
    if (!(lambda > 0)) throw InputError("prox_grid_oracle: lambda must be positive");
    if (depth < 1) throw InputError("prox_grid_oracle: depth must be >= 1");

    const double q = 2.0 / depth;
    auto phi = [&](double rho) {
        const double d = m - rho;
        return d * d + lambda * std::pow(std::abs(rho), q);
    };

    // Points are lo + (hi - lo) * i / n so that 0 is hit exactly on a
    // symmetric grid with an even step count.
    double best = grid.lo;
    double best_val = phi(best);
    const int n = grid.coarse_steps;
    for (int i = 1; i <= n; ++i) {
        const double rho = grid.lo + (grid.hi - grid.lo) * (static_cast<double>(i) / n);
        const double v = phi(rho);
        if (v < best_val) {
            best_val = v;
            best = rho;
        }
    }

    double h = (grid.hi - grid.lo) / n;
    for (int round = 0; round < grid.refine_rounds; ++round) {
        const double center = best;
        const double fine = h / grid.refine_factor;
        for (int i = -grid.refine_factor; i <= grid.refine_factor; ++i) {
            const double rho = center + i * fine;
            const double v = phi(rho);
            if (v < best_val) {
                best_val = v;
                best = rho;
            }
        }
        h = fine;
    }
    return best;
}

double prox_grid_oracle(double m, double lambda, int depth) {
    return prox_grid_oracle(m, lambda, depth, GridSpec::around(m));
}

namespace {

constexpr double kMaxGaugeCondition = 10.0;
constexpr int kMaxGaugeDraws = 10000;

}  // namespace

FiberSample fiber_sample(const Matrix& x, const Dims& dims, int samples, std::uint64_t seed) {
    if (samples < 1) throw InputError("fiber_sample needs samples >= 1");
    const FactorStack start = balanced_factors(x, dims);
    const int L = start.depth();

    FiberSample out;
    out.balanced_value = start.squared_norm() / L;
    out.min_value = out.balanced_value;

    std::mt19937_64 rng(detail::mix_seed(seed));
    std::normal_distribution<double> normal(0.0, 1.0);

    auto draw_gauge = [&](Eigen::Index n) {
        for (int attempt = 0; attempt < kMaxGaugeDraws; ++attempt) {
            Matrix g = Matrix::Identity(n, n);
            for (Eigen::Index c = 0; c < n; ++c) {
                for (Eigen::Index r = 0; r < n; ++r) g(r, c) += 0.5 * normal(rng);
            }
            const Vector s = singular_values(g);
            const double smin = s(s.size() - 1);
            if (smin > 0 && s(0) / smin <= kMaxGaugeCondition) return g;
            ++out.rejected;
        }
        throw NumericalError("fiber_sample: could not draw a well-conditioned gauge");
    };

    for (int k = 0; k < samples; ++k) {
        std::vector<Matrix> layers = start.layers();
        for (int i = 0; i + 1 < L; ++i) {
            const Matrix g = draw_gauge(layers[i].rows());
            layers[i] = g * layers[i];
            // W_{i+1} G^{-1} = (G^{-T} W_{i+1}^T)^T
            layers[i + 1] = g.transpose().partialPivLu().solve(layers[i + 1].transpose()).transpose();
        }
        const FactorStack sample(std::move(layers));
        const double value = sample.squared_norm() / L;
        out.values.push_back(value);
        out.balance_gaps.push_back(balance_gap(sample));
        out.min_value = std::min(out.min_value, value);
    }
    return out;
}

double fiber_sample_oracle(const Matrix& x, const Dims& dims, int samples, std::uint64_t seed) {
    return fiber_sample(x, dims, samples, seed).min_value;
}

FactorStack finite_diff_gradient(const ProblemSpec& spec, const FactorStack& stack, double step) {
    if (!(step > 0)) throw InputError("finite_diff_gradient: step must be positive");
    const Dims& dims = stack.dims();
    const Vector base = stack.flatten();
    Vector x = base;
    Vector grad(base.size());
    for (Eigen::Index j = 0; j < base.size(); ++j) {
        const double h = (base(j) + step * (1 + std::abs(base(j)))) - base(j);
        x(j) = base(j) + h;
        const double fp = objective(FactorStack::unflatten(dims, x), spec);
        x(j) = base(j) - h;
        const double fm = objective(FactorStack::unflatten(dims, x), spec);
        x(j) = base(j);
        grad(j) = (fp - fm) / (2 * h);
    }
    return FactorStack::unflatten(dims, grad);
}

}  // namespace dmf
