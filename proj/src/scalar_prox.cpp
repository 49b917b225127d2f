#include "dmf/scalar_prox.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmf {

namespace {

constexpr int kMaxRootIters = 200;
constexpr int kNewtonPolish = 5;

void require_positive_lambda(double lambda) {
    if (!(lambda > 0) || !std::isfinite(lambda)) {
        throw InputError(fmt::format("lambda must be a positive finite real, got {}", lambda));
    }
}

void require_deep(int depth, const char* what) {
    if (depth < 3) throw InputError(fmt::format("{} requires depth >= 3, got {}", what, depth));
}

// (1 - q/2) (1 - q)^((q-1)/(2-q)); m_bar = coeff * lambda^(1/(2-q)).
double threshold_coeff(double q) { return (1 - q / 2) * std::pow(1 - q, (q - 1) / (2 - q)); }

double signed_like(double m, double magnitude) { return m < 0 ? -magnitude : magnitude; }

}  // namespace

std::string_view to_string(ProxBranch branch) noexcept {
    switch (branch) {
        case ProxBranch::Zero: return "Zero";
        case ProxBranch::Interior: return "Interior";
        case ProxBranch::Tie: return "Tie";
        case ProxBranch::ConvexClosedForm: return "ConvexClosedForm";
    }
    return "?";
}

double prox_objective(double rho, double m, double lambda, int depth) {
    const double r = m - rho;
    const double a = std::abs(rho);
    return r * r + (a > 0 ? lambda * std::pow(a, 2.0 / depth) : 0.0);
}

double threshold_m_bar(double lambda, int depth) {
    require_positive_lambda(lambda);
    require_deep(depth, "threshold_m_bar");
    const double q = 2.0 / depth;
    return threshold_coeff(q) * std::pow(lambda, 1 / (2 - q));
}

double collapse_lambda(double magnitude, int depth) {
    require_deep(depth, "collapse_lambda");
    if (!(magnitude >= 0) || !std::isfinite(magnitude)) {
        throw InputError(fmt::format("collapse_lambda magnitude must be finite and >= 0, got {}", magnitude));
    }
    const double q = 2.0 / depth;
    return std::pow(magnitude / threshold_coeff(q), 2 - q);
}

double tie_candidate(double lambda, int depth) {
    require_positive_lambda(lambda);
    require_deep(depth, "tie_candidate");
    const double q = 2.0 / depth;
    return std::pow(lambda * (1 - q), 1 / (2 - q));
}

std::optional<double> stationary_root(double mag, double lambda, double q, const Tolerances& tol) {
    require_positive_lambda(lambda);
    if (!(mag > 0) || !std::isfinite(mag)) throw InputError(fmt::format("stationary_root needs mag > 0, got {}", mag));
    if (!(q > 0 && q < 1)) throw InputError(fmt::format("stationary_root needs q in (0, 1), got {}", q));

    auto dphi = [&](double rho) { return 2 * (rho - mag) + lambda * q * std::pow(rho, q - 1); };
    auto d2phi = [&](double rho) { return 2 + lambda * q * (q - 1) * std::pow(rho, q - 2); };

    // phi'' vanishes only at the inflection point; phi' is minimal there.
    const double inflection = std::pow(lambda * q * (1 - q) / 2, 1 / (2 - q));
    if (dphi(inflection) > 0) return std::nullopt;

    double lo = inflection;
    double hi = mag;
    if (!(dphi(hi) > 0) || hi <= lo) {
        throw NumericalError(fmt::format("stationary_root: no sign change on [{}, {}]", lo, hi));
    }

    int iters = 0;
    while (hi - lo > tol.root_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // bracket at floating-point resolution
        if (++iters > kMaxRootIters) {
            throw NumericalError(fmt::format("stationary_root did not converge in {} iterations", kMaxRootIters));
        }
        (dphi(mid) > 0 ? hi : lo) = mid;
    }

    double root = 0.5 * (lo + hi);
    for (int k = 0; k < kNewtonPolish; ++k) {
        const double g = dphi(root);
        if (g == 0) break;
        const double next = root - g / d2phi(root);
        if (!(next >= lo && next <= hi) || std::abs(dphi(next)) >= std::abs(g)) break;
        root = next;
    }
    return root;
}

ProxResult prox_scalar(double m, double lambda, int depth, const Tolerances& tol) {
    require_positive_lambda(lambda);
    tol.validate();
    if (!std::isfinite(m)) throw InputError("prox_scalar: m must be finite");
    if (depth < 1) throw InputError(fmt::format("depth must be >= 1, got {}", depth));

    const double mag = std::abs(m);
    ProxResult out;

    if (depth == 1) {
        out.branch = ProxBranch::ConvexClosedForm;
        out.minimizer = m / (1 + lambda);
        out.threshold_m_bar = 0;
        out.candidates = {out.minimizer};
        return out;
    }
    if (depth == 2) {
        out.branch = ProxBranch::ConvexClosedForm;
        out.minimizer = signed_like(m, std::max(mag - lambda / 2, 0.0));
        out.threshold_m_bar = lambda / 2;
        out.candidates = {out.minimizer};
        return out;
    }

    const double m_bar = threshold_m_bar(lambda, depth);
    out.threshold_m_bar = m_bar;

    if (mag < m_bar * (1 - tol.tie_tol)) {
        out.branch = ProxBranch::Zero;
        out.minimizer = 0;
        out.candidates = {0.0};
        return out;
    }
    if (mag > m_bar * (1 + tol.tie_tol)) {
        const auto root = stationary_root(mag, lambda, 2.0 / depth, tol);
        if (!root) throw NumericalError("prox_scalar: no interior stationary point above the threshold");
        out.branch = ProxBranch::Interior;
        out.minimizer = signed_like(m, *root);
        out.candidates = {out.minimizer};
        return out;
    }

    const double nonzero = signed_like(m, tie_candidate(lambda, depth));
    out.branch = ProxBranch::Tie;
    out.unique = false;
    out.minimizer = nonzero;
    out.candidates = {0.0, nonzero};
    return out;
}

ScalarSpectrum hessian_spectrum_scalar(double m, double lambda, int depth, const Tolerances& tol) {
    require_deep(depth, "hessian_spectrum_scalar");
    const ProxResult prox = prox_scalar(m, lambda, depth, tol);
    if (prox.branch == ProxBranch::Tie) {
        throw PreconditionError(
            fmt::format("hessian_spectrum_scalar: |m| = {} lies on the non-uniqueness threshold {}", std::abs(m),
                        prox.threshold_m_bar));
    }

    const double L = depth;
    ScalarSpectrum out;
    if (prox.branch == ProxBranch::Zero) {
        // At the origin every mixed partial keeps at least two zero factors.
        const double eig = 2 * lambda / L;
        out.bulk_eig = out.top_eig = out.lambda_max = eig;
        out.layer_magnitude = 0;
        out.eigenvalues.assign(static_cast<std::size_t>(depth), eig);
        return out;
    }

    const double w = std::pow(std::abs(prox.minimizer), 1 / L);
    const double curvature = 2 * L * std::pow(w, 2 * L - 2);
    out.layer_magnitude = w;
    out.bulk_eig = 4 * lambda / L;
    out.top_eig = curvature + 4 * lambda / L - 2 * lambda;
    out.lambda_max = std::max(curvature - 2 * lambda, 0.0) + 4 * lambda / L;
    out.eigenvalues.assign(static_cast<std::size_t>(depth - 1), out.bulk_eig);
    out.eigenvalues.push_back(out.top_eig);
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
    return out;
}

}  // namespace dmf
