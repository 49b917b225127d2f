#include "dmf/matrix_solver.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace dmf {

namespace {

void require_shape(const Matrix& m, const ProblemSpec& spec, const char* what) {
    if (m.rows() != spec.rows() || m.cols() != spec.cols()) {
        throw InputError(fmt::format("{}: expected a {}x{} matrix, got {}x{}", what, spec.rows(), spec.cols(), m.rows(),
                                     m.cols()));
    }
}

constexpr double kMonotoneSlack = 1e-9;

}  // namespace

double objective_end2end(const Matrix& m, const ProblemSpec& spec) {
    require_shape(m, spec, "objective_end2end");
    return (spec.target() - m).squaredNorm() + spec.lambda() * schatten_q(m, spec.q());
}

double strict_saddle_constant(int depth) {
    if (depth < 3) throw InputError("strict_saddle_constant requires depth >= 3");
    const double L = depth;
    const double a = std::pow((L - 2) / L, L / (2 * (L - 1)));
    const double b = std::pow(L / (L - 2), (L - 2) / (2 * (L - 1)));
    return std::pow(L, L) * std::pow(a + b, -2 * (L - 1));
}

MatrixSolution solve_closed_form(const ProblemSpec& spec, const Tolerances& tol) {
    tol.validate();
    MatrixSolution out;
    out.svd = svd_ordered(spec.target(), tol);

    const Vector& sigma = out.svd.sigma;
    const Eigen::Index r = sigma.size();
    const double sigma_max = r > 0 ? sigma(0) : 0.0;

    out.sigma_star = Vector::Zero(r);
    out.prox_results.reserve(static_cast<std::size_t>(r));
    for (Eigen::Index i = 0; i < r; ++i) {
        const double s = sigma(i) <= tol.rank_tol * sigma_max ? 0.0 : sigma(i);
        ProxResult prox = prox_scalar(s, spec.lambda(), spec.depth(), tol);
        out.sigma_star(i) = prox.minimizer;
        if (!prox.unique) {
            out.unique = false;
            out.on_measure_zero_set = true;
            out.offending_indices.push_back(i + 1);
        }
        out.prox_results.push_back(std::move(prox));
    }

    for (Eigen::Index i = 1; i < r; ++i) {
        if (out.sigma_star(i) > out.sigma_star(i - 1) + kMonotoneSlack * (1 + out.sigma_star(i - 1))) {
            throw NumericalError(fmt::format("prox output not non-increasing at index {}: {} > {}", i + 1,
                                             out.sigma_star(i), out.sigma_star(i - 1)));
        }
    }

    out.m_star = out.svd.compose(out.sigma_star);
    out.objective_value = (sigma - out.sigma_star).squaredNorm() + spec.lambda() * schatten_q_sigma(out.sigma_star, spec.q());

    if (spec.depth() >= 3) {
        const double lhs = std::pow(spec.lambda(), spec.depth());
        const double c = strict_saddle_constant(spec.depth());
        for (Eigen::Index i = 0; i < r; ++i) {
            const double rhs = sigma(i) * c;
            if (std::abs(lhs - rhs) <= 1e-9 * std::max(lhs, rhs)) {
                out.warnings.push_back(fmt::format(
                    "lambda^L matches sigma_{} * c_L; critical points need not be minima or strict saddles", i + 1));
            }
        }
    }
    return out;
}

MeasureZeroReport is_on_measure_zero_set(const ProblemSpec& spec, double eps) {
    MeasureZeroReport report;
    if (spec.depth() <= 2) return report;
    const double m_bar = threshold_m_bar(spec.lambda(), spec.depth());
    const Vector sigma = singular_values(spec.target());
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (sigma(i) >= m_bar * (1 - eps) && sigma(i) <= m_bar * (1 + eps)) report.indices.push_back(i + 1);
    }
    report.hit = !report.indices.empty();
    return report;
}

namespace {

Vector truncated_sigma(Vector sigma) {
    const double cutoff = sigma.size() > 0 ? Tolerances{}.rank_tol * sigma(0) : 0.0;
    for (double& s : sigma) {
        if (s <= cutoff) s = 0;
    }
    return sigma;
}

}  // namespace

FactorStack balanced_factors(const Matrix& m_star, const Dims& dims) {
    validate_dims(dims, m_star.rows(), m_star.cols());
    const int depth = static_cast<int>(dims.size()) - 1;
    const OrderedSvd svd = svd_ordered(m_star);
    if (depth == 1) return FactorStack({svd.reconstruct()});

    const Eigen::Index r = svd.sigma.size();
    // Rounding noise in the SVD of a rank-deficient m_star would otherwise
    // turn into O(eps^(1/L)) entries in the factors.
    const Vector root = truncated_sigma(svd.sigma).array().pow(1.0 / depth).matrix();

    std::vector<Matrix> layers;
    layers.reserve(static_cast<std::size_t>(depth));
    for (int i = 1; i <= depth; ++i) {
        const Eigen::Index out_dim = dims[static_cast<std::size_t>(i)];
        const Eigen::Index in_dim = dims[static_cast<std::size_t>(i) - 1];
        Matrix w = Matrix::Zero(out_dim, in_dim);
        if (i == 1) {
            w.topRows(r) = root.asDiagonal() * svd.v.leftCols(r).transpose();
        } else if (i == depth) {
            w.leftCols(r) = svd.u.leftCols(r) * root.asDiagonal();
        } else {
            w.topLeftCorner(r, r) = root.asDiagonal();
        }
        layers.push_back(std::move(w));
    }
    return FactorStack(std::move(layers));
}

double layer_norm_constant(const Matrix& m_star, int depth) {
    if (depth < 1) throw InputError("depth must be >= 1");
    return std::sqrt(schatten_q(m_star, 2.0 / depth));
}

double trace_lower_bound(const Matrix& m_star, double g_star, const ProblemSpec& spec, const Dims& dims) {
    require_shape(m_star, spec, "trace_lower_bound");
    if (dims.size() != static_cast<std::size_t>(spec.depth()) + 1) {
        throw InputError(fmt::format("dims describe depth {}, problem has depth {}", dims.size() - 1, spec.depth()));
    }
    const double L = spec.depth();
    const double ridge = 2 * spec.lambda() / L * static_cast<double>(parameter_count(dims));
    const double p2 = m_star.squaredNorm();
    if (!(g_star > 0) || p2 == 0) return ridge;
    return 2 * L * p2 / (g_star * g_star) + ridge;
}

}  // namespace dmf
