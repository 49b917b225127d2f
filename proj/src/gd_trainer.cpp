#include "dmf/gd_trainer.hpp"

#include "parallel.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace dmf {

namespace {

constexpr double kDivergenceFactor = 1e3;

void require_compatible(const FactorStack& stack, const ProblemSpec& spec) {
    const Dims& d = stack.dims();
    if (d.front() != spec.cols() || d.back() != spec.rows()) {
        throw InputError(fmt::format("stack maps {} -> {}, target is {}x{}", d.front(), d.back(), spec.rows(),
                                     spec.cols()));
    }
    if (stack.depth() != spec.depth()) {
        throw InputError(fmt::format("stack has depth {}, problem has depth {}", stack.depth(), spec.depth()));
    }
}

// prefix[k] = W_k ... W_1 for k = 1..L; prefix[0] is unused (identity).
std::vector<Matrix> prefix_products(const FactorStack& stack) {
    const int L = stack.depth();
    std::vector<Matrix> prefix(static_cast<std::size_t>(L) + 1);
    prefix[1] = stack.layer(0);
    for (int k = 2; k <= L; ++k) prefix[k] = stack.layer(k - 1) * prefix[k - 1];
    return prefix;
}

double nan_to_inf(double x) { return std::isnan(x) ? std::numeric_limits<double>::infinity() : x; }

}  // namespace

void GdConfig::validate() const {
    if (!(step_size > 0) || !std::isfinite(step_size)) throw InputError("step_size must be positive");
    if (max_iters < 1) throw InputError("max_iters must be >= 1");
    if (!(init_scale > 0) || !std::isfinite(init_scale)) throw InputError("init_scale must be positive");
    if (!(grad_tol >= 0)) throw InputError("grad_tol must be non-negative");
}

bool TrainTrace::monotone(double slack) const {
    for (std::size_t t = 1; t < objective_history.size(); ++t) {
        if (objective_history[t] > objective_history[t - 1] + slack) return false;
    }
    return true;
}

double objective(const FactorStack& stack, const ProblemSpec& spec) {
    require_compatible(stack, spec);
    return (spec.target() - stack.product()).squaredNorm() + spec.lambda() / spec.depth() * stack.squared_norm();
}

double objective_and_gradient(const FactorStack& stack, const ProblemSpec& spec, FactorStack& grad) {
    require_compatible(stack, spec);
    const int L = stack.depth();
    const double ridge = 2 * spec.lambda() / L;

    const std::vector<Matrix> prefix = prefix_products(stack);
    Matrix left = prefix[L] - spec.target();  // A_L^T R with A_L = I
    const double value = left.squaredNorm() + spec.lambda() / L * stack.squared_norm();

    std::vector<Matrix> layers(static_cast<std::size_t>(L));
    for (int k = L; k >= 1; --k) {
        const Matrix& w = stack.layer(k - 1);
        Matrix g = k == 1 ? Matrix(2 * left) : Matrix(2 * left * prefix[k - 1].transpose());
        g += ridge * w;
        layers[k - 1] = std::move(g);
        if (k > 1) left = w.transpose() * left;
    }
    grad = FactorStack(std::move(layers));
    return value;
}

FactorStack gradient(const FactorStack& stack, const ProblemSpec& spec) {
    FactorStack grad = FactorStack::zeros(stack.dims());
    objective_and_gradient(stack, spec, grad);
    return grad;
}

FactorStack random_stack(const Dims& dims, double init_scale, std::uint64_t seed) {
    std::mt19937_64 rng(detail::mix_seed(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> layers;
    for (std::size_t i = 1; i < dims.size(); ++i) {
        const double scale = init_scale / std::sqrt(static_cast<double>(dims[i - 1]));
        Matrix w(dims[i], dims[i - 1]);
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = scale * normal(rng);
        }
        layers.push_back(std::move(w));
    }
    return FactorStack(std::move(layers));
}

TrainTrace gd_run(const ProblemSpec& spec, const GdConfig& config) {
    config.validate();
    validate_dims(config.dims, spec.rows(), spec.cols());
    if (config.dims.size() != static_cast<std::size_t>(spec.depth()) + 1) {
        throw InputError(fmt::format("dims describe depth {}, problem has depth {}", config.dims.size() - 1,
                                     spec.depth()));
    }

    FactorStack w = random_stack(config.dims, config.init_scale, config.seed);
    FactorStack grad = FactorStack::zeros(config.dims);

    TrainTrace trace{.objective_history = {}, .product_fro_history = {}, .final_stack = w, .config = config};
    trace.objective_history.reserve(static_cast<std::size_t>(config.max_iters));
    trace.product_fro_history.reserve(static_cast<std::size_t>(config.max_iters));

    double initial = std::numeric_limits<double>::quiet_NaN();
    bool stopped = false;
    for (int t = 0; t < config.max_iters; ++t) {
        const double value = objective_and_gradient(w, spec, grad);
        const double gnorm = std::sqrt(grad.squared_norm());
        if (t == 0) initial = value;
        trace.objective_history.push_back(value);
        trace.product_fro_history.push_back(w.product().norm());

        if (!std::isfinite(value) || !std::isfinite(gnorm) || value > kDivergenceFactor * initial) {
            trace.diverged = true;
            trace.final_objective = nan_to_inf(value);
            trace.final_grad_norm = nan_to_inf(gnorm);
            stopped = true;
            break;
        }
        if (gnorm <= config.grad_tol) {
            trace.converged = true;
            trace.final_objective = value;
            trace.final_grad_norm = gnorm;
            stopped = true;
            break;
        }
        for (int k = 0; k < w.depth(); ++k) w.layer(k) -= config.step_size * grad.layer(k);
    }

    if (!stopped) {
        trace.final_objective = nan_to_inf(objective_and_gradient(w, spec, grad));
        trace.final_grad_norm = nan_to_inf(std::sqrt(grad.squared_norm()));
        trace.converged = trace.final_grad_norm <= config.grad_tol;
        if (!std::isfinite(trace.final_objective) || trace.final_objective > kDivergenceFactor * initial) {
            trace.diverged = true;
            trace.converged = false;
        }
    }
    trace.final_stack = std::move(w);
    return trace;
}

TrainTrace gd_grid_search(const ProblemSpec& spec, std::span<const GdConfig> grid, unsigned threads) {
    if (grid.empty()) throw InputError("gd_grid_search needs a non-empty grid");
    std::vector<std::optional<TrainTrace>> runs(grid.size());
    detail::parallel_for(grid.size(), threads, [&](std::size_t i) { runs[i] = gd_run(spec, grid[i]); });

    auto score = [](const TrainTrace& t) {
        return t.diverged ? std::numeric_limits<double>::infinity() : nan_to_inf(t.final_objective);
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (score(*runs[i]) < score(*runs[best])) best = i;
    }
    return std::move(*runs[best]);
}

std::vector<GdConfig> make_grid(const Dims& dims, const std::vector<double>& step_sizes,
                                const std::vector<double>& init_scales, const std::vector<std::uint64_t>& seeds,
                                int max_iters, double grad_tol) {
    std::vector<GdConfig> grid;
    for (double eta : step_sizes) {
        for (double scale : init_scales) {
            for (std::uint64_t seed : seeds) {
                grid.push_back({.step_size = eta,
                                .max_iters = max_iters,
                                .init_scale = scale,
                                .seed = seed,
                                .grad_tol = grad_tol,
                                .dims = dims});
            }
        }
    }
    return grid;
}

std::vector<GdConfig> default_grid(const Dims& dims, int max_iters) {
    std::vector<std::uint64_t> seeds(20);
    for (std::uint64_t s = 0; s < seeds.size(); ++s) seeds[s] = s;
    return make_grid(dims, {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2}, {1e-2, 1e-1, 1.0}, seeds, max_iters);
}

std::vector<GdConfig> desk_grid(const Dims& dims, int max_iters) {
    return make_grid(dims, {3e-3, 1e-2, 3e-2}, {1e-1, 1.0}, {0, 1, 2, 3, 4}, max_iters);
}

double hessian_trace_exact(const FactorStack& stack, const ProblemSpec& spec) {
    require_compatible(stack, spec);
    const int L = stack.depth();
    const Dims& d = stack.dims();
    const std::vector<Matrix> prefix = prefix_products(stack);

    double acc = 0;
    // suffix = A_k = W_L ... W_{k+1}; starts as the identity on R^{d_L}.
    std::optional<Matrix> suffix;
    for (int k = L; k >= 1; --k) {
        const double a2 = suffix ? suffix->squaredNorm() : static_cast<double>(d[L]);
        const double b2 = k == 1 ? static_cast<double>(d[0]) : prefix[k - 1].squaredNorm();
        acc += 2 * a2 * b2;
        suffix = suffix ? Matrix(*suffix * stack.layer(k - 1)) : stack.layer(k - 1);
    }
    return acc + 2 * spec.lambda() / L * static_cast<double>(stack.parameter_count());
}

Matrix hessian_fd_raw(const ProblemSpec& spec, const FactorStack& stack, double step) {
    require_compatible(stack, spec);
    const Eigen::Index n = stack.parameter_count();
    if (n > kMaxFdParameters) {
        throw InputError(fmt::format("hessian_fd: {} parameters exceeds the limit of {}", n, kMaxFdParameters));
    }
    if (!(step > 0)) throw InputError("hessian_fd: step must be positive");

    const Dims& dims = stack.dims();
    const Vector base = stack.flatten();
    Vector x = base;
    auto f = [&] { return objective(FactorStack::unflatten(dims, x), spec); };

    Vector h(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double raw = step * (1 + std::abs(base(j)));
        h(j) = (base(j) + raw) - base(j);
    }

    const double f0 = f();
    Matrix out(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        x(j) = base(j) + h(j);
        const double fp = f();
        x(j) = base(j) - h(j);
        const double fm = f();
        x(j) = base(j);
        out(j, j) = (fp - 2 * f0 + fm) / (h(j) * h(j));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j + 1; k < n; ++k) {
            auto at = [&](double sj, double sk) {
                x(j) = base(j) + sj * h(j);
                x(k) = base(k) + sk * h(k);
                const double v = f();
                x(j) = base(j);
                x(k) = base(k);
                return v;
            };
            const double pp = at(1, 1), pm = at(1, -1), mp = at(-1, 1), mm = at(-1, -1);
            const double denom = 4 * h(j) * h(k);
            out(j, k) = ((pp - pm) - (mp - mm)) / denom;
            out(k, j) = ((pp - mp) - (pm - mm)) / denom;
        }
    }
    return out;
}

Matrix hessian_fd(const ProblemSpec& spec, const FactorStack& stack, double step) {
    const Matrix raw = hessian_fd_raw(spec, stack, step);
    return 0.5 * (raw + raw.transpose());
}

double balance_gap(const FactorStack& stack) {
    double worst = 0;
    for (int i = 0; i + 1 < stack.depth(); ++i) {
        const Matrix& lower = stack.layer(i);
        const Matrix& upper = stack.layer(i + 1);
        const Matrix outer = lower * lower.transpose();
        const double gap = (upper.transpose() * upper - outer).norm() / (1 + outer.norm());
        worst = std::max(worst, gap);
    }
    return worst;
}

}  // namespace dmf
