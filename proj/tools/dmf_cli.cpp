// dmf: closed-form minimizers of l2-regularized deep matrix factorization,
// and the experiments that check them against gradient descent.
//
// Exit codes: 0 success, 1 verification failure, 2 input error,
// 3 numerical error.

#include "dmf/experiments.hpp"
#include "dmf/gd_trainer.hpp"
#include "dmf/matrix_solver.hpp"
#include "dmf/scalar_prox.hpp"
#include "dmf/verify.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>

namespace {

using namespace dmf;

constexpr int kExitVerifyFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct GlobalFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir;
    bool emit_svg = false;
};

// Flags shared by every subcommand that works on a target matrix.
struct TargetFlags {
    std::string target;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    int depth = 0;
    double lambda = 0;
    double alpha = 0;
    Eigen::Index hidden = 0;
    std::vector<Eigen::Index> dims;
    std::vector<double> steps;
    std::vector<double> init_scales;
    std::vector<std::uint64_t> seeds;
    int max_iters = 0;
    double grad_tol = 0;
    std::vector<double> alphas;

    CLI::Option* target_opt = nullptr;
    CLI::Option* rows_opt = nullptr;
    CLI::Option* cols_opt = nullptr;
    CLI::Option* depth_opt = nullptr;
    CLI::Option* lambda_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* hidden_opt = nullptr;
    CLI::Option* dims_opt = nullptr;
    CLI::Option* steps_opt = nullptr;
    CLI::Option* init_opt = nullptr;
    CLI::Option* seeds_opt = nullptr;
    CLI::Option* iters_opt = nullptr;
    CLI::Option* tol_opt = nullptr;
    CLI::Option* alphas_opt = nullptr;

    void attach(CLI::App* cmd, bool with_gd, bool with_alphas) {
        target_opt = cmd->add_option("--target", target, "Target matrix CSV (one row per line, no header)");
        rows_opt = cmd->add_option("--rows", rows, "Rows of a generated Gaussian target");
        cols_opt = cmd->add_option("--cols", cols, "Columns of a generated Gaussian target");
        depth_opt = cmd->add_option("--depth", depth, "Depth L");
        lambda_opt = cmd->add_option("--lambda", lambda, "Regularization strength");
        alpha_opt = cmd->add_option("--alpha", alpha, "Regularization as a multiple of the collapse threshold");
        hidden_opt = cmd->add_option("--hidden", hidden, "Hidden layer width");
        dims_opt = cmd->add_option("--dims", dims, "Layer widths d_0 ... d_L");
        if (with_gd) {
            steps_opt = cmd->add_option("--steps", steps, "GD step sizes");
            init_opt = cmd->add_option("--init-scales", init_scales, "GD initialization scales");
            seeds_opt = cmd->add_option("--seeds", seeds, "GD seeds");
            iters_opt = cmd->add_option("--max-iters", max_iters, "GD iterations");
            tol_opt = cmd->add_option("--grad-tol", grad_tol, "GD gradient-norm stopping tolerance");
        }
        if (with_alphas) alphas_opt = cmd->add_option("--alphas", alphas, "Sweep alpha grid");
    }

    ExperimentConfig resolve(const GlobalFlags& g) const {
        ExperimentConfig c = g.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(g.config_path);
        if (target_opt->count()) {
            if (rows_opt->count() || cols_opt->count()) throw InputError("give either --target or --rows/--cols");
            c.target_path = target;
        }
        if (rows_opt->count()) {
            c.target_path.reset();
            c.rows = rows;
        }
        if (cols_opt->count()) {
            c.target_path.reset();
            c.cols = cols;
        }
        if (depth_opt->count()) c.depth = depth;
        if (lambda_opt->count()) {
            c.lambda = lambda;
            c.alpha.reset();
        }
        if (alpha_opt->count()) {
            if (lambda_opt->count()) throw InputError("give either --lambda or --alpha");
            c.alpha = alpha;
            c.lambda.reset();
        }
        if (hidden_opt->count()) c.hidden = hidden;
        if (dims_opt->count()) c.dims = dims;
        if (steps_opt && steps_opt->count()) c.gd.step_sizes = steps;
        if (init_opt && init_opt->count()) c.gd.init_scales = init_scales;
        if (seeds_opt && seeds_opt->count()) c.gd.seeds = seeds;
        if (iters_opt && iters_opt->count()) c.gd.max_iters = max_iters;
        if (tol_opt && tol_opt->count()) c.gd.grad_tol = grad_tol;
        if (alphas_opt && alphas_opt->count()) c.alphas = alphas;
        if (g.seed_given) c.seed = g.seed;
        if (!g.out_dir.empty()) c.output_dir = g.out_dir;
        if (g.emit_svg) c.emit_svg = true;
        c.validate();
        return c;
    }
};

std::filesystem::path prepare_out(const ExperimentConfig& c) {
    std::error_code ec;
    std::filesystem::create_directories(c.output_dir, ec);
    if (ec) throw InputError(fmt::format("cannot create output directory '{}': {}", c.output_dir.string(), ec.message()));
    return c.output_dir;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
    out << j.dump(2) << '\n';
}

int cmd_prox(double m, double lambda, int depth) {
    std::cout << to_json(prox_scalar(m, lambda, depth)).dump(2) << '\n';
    return 0;
}

int cmd_spectrum(double m, double lambda, int depth, double fd_step) {
    const ProblemSpec spec(Matrix::Constant(1, 1, m), depth, lambda);
    if (depth < 3) {
        // No closed form is claimed for shallow chains; report FD only.
        const double rho = prox_scalar(m, lambda, depth).minimizer;
        std::vector<int> signs(static_cast<std::size_t>(depth), 1);
        if (rho < 0) signs.back() = -1;
        const auto eig = symmetric_eigenvalues(hessian_fd(spec, balanced_scalar_stack(rho, depth, signs), fd_step));
        fmt::print("{:>4}  {:>24}\n", "i", "finite_difference");
        for (std::size_t i = 0; i < eig.size(); ++i) fmt::print("{:>4}  {:>24.17g}\n", i + 1, eig[i]);
        return 0;
    }
    const SpectrumComparison cmp = compare_scalar_spectrum(m, lambda, depth, fd_step);
    fmt::print("layer magnitude w = {:.17g}\n", cmp.closed_form.layer_magnitude);
    fmt::print("{:>4}  {:>24}  {:>24}  {:>12}\n", "i", "closed_form", "finite_difference", "rel_error");
    for (std::size_t i = 0; i < cmp.fd_eigenvalues.size(); ++i) {
        const double cf = cmp.closed_form.eigenvalues[i];
        const double fd = cmp.fd_eigenvalues[i];
        fmt::print("{:>4}  {:>24.17g}  {:>24.17g}  {:>12.3e}\n", i + 1, cf, fd, std::abs(fd - cf) / std::abs(cf));
    }
    fmt::print("lambda_max = {:.17g}\nmax relative error = {:.3e}\n", cmp.closed_form.lambda_max, cmp.max_rel_error);
    return 0;
}

int cmd_solve(const ExperimentConfig& c) {
    const Matrix target = load_target(c);
    const ProblemSpec spec(target, c.depth, resolve_lambda(c, target));
    const MatrixSolution sol = solve_closed_form(spec);
    const auto out = prepare_out(c);
    json j = to_json(sol);
    j["lambda"] = spec.lambda();
    j["depth"] = spec.depth();
    write_json(out / "solution.json", j);
    write_sigmas_csv(out / "sigmas.csv", sol);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_factorize(const ExperimentConfig& c) {
    const Matrix target = load_target(c);
    const ProblemSpec spec(target, c.depth, resolve_lambda(c, target));
    const Dims dims = resolve_dims(c, target);
    const MatrixSolution sol = solve_closed_form(spec);
    const FactorStack stack = balanced_factors(sol.m_star, dims);
    const double g = layer_norm_constant(sol.m_star, spec.depth());
    const auto out = prepare_out(c);

    json layers = json::array();
    for (int i = 0; i < stack.depth(); ++i) {
        const auto file = fmt::format("W{}.csv", i + 1);
        write_matrix_csv(out / file, stack.layer(i));
        layers.push_back({{"file", file}, {"rows", stack.layer(i).rows()}, {"cols", stack.layer(i).cols()}});
    }
    const json j{{"dims", dims},
                 {"layers", layers},
                 {"layer_norms", stack.layer_norms()},
                 {"layer_norm_constant", g},
                 {"balance_gap", balance_gap(stack)},
                 {"objective_factored", objective(stack, spec)},
                 {"objective_end2end", sol.objective_value},
                 {"hessian_trace", hessian_trace_exact(stack, spec)},
                 {"trace_lower_bound", trace_lower_bound(sol.m_star, g, spec, dims)},
                 {"unique", sol.unique}};
    write_json(out / "factors.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_train(const ExperimentConfig& c) {
    const Matrix target = load_target(c);
    const ProblemSpec spec(target, c.depth, resolve_lambda(c, target));
    const Dims dims = resolve_dims(c, target);
    const TrainTrace best = gd_grid_search(spec, grid_from(c.gd, dims), c.threads);
    const MatrixSolution sol = solve_closed_form(spec);
    const auto out = prepare_out(c);

    json j = to_json(best);
    j["closedform_objective"] = sol.objective_value;
    j["closedform_product_fro"] = sol.m_star.norm();
    j["relative_distance_to_closed_form"] =
        (best.final_stack.product() - sol.m_star).norm() / std::max(sol.m_star.norm(), 1e-300);
    write_json(out / "trace.json", j);
    write_history_csv(out / "history.csv", best);

    json summary = j;
    summary.erase("objective_history");
    summary.erase("product_fro_history");
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_sweep(const ExperimentConfig& c) {
    const Matrix target = load_target(c);
    const Dims dims = resolve_dims(c, target);
    const auto alphas = c.alphas.empty() ? default_alphas() : c.alphas;
    const auto rows = run_collapse_sweep(target, c.depth, dims, alphas, c.gd, c.threads);
    const auto out = prepare_out(c);
    write_sweep_csv(out / "sweep.csv", rows);
    if (c.emit_svg) {
        std::ofstream svg(out / "sweep.svg");
        svg << sweep_svg(rows);
    }
    std::cout << sweep_csv(rows);
    return 0;
}

int cmd_verify(std::uint64_t seed, const std::string& size_class, const std::string& fault) {
    if (!fault.empty() && fault != "gradient-sign") throw InputError(fmt::format("unknown fault '{}'", fault));
    const VerifyOptions opts{.seed = seed, .size = parse_size_class(size_class), .flip_gradient_sign = !fault.empty()};
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_verification(opts);
    bool all = true;
    for (const CheckResult& r : results) {
        fmt::print("{} {}: {}\n", r.passed ? "PASS" : "FAIL", r.name, r.detail);
        all = all && r.passed;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("{} ({} checks, {:.1f} s)\n", all ? "ALL PASSED" : "FAILURES", results.size(), secs);
    return all ? 0 : kExitVerifyFailed;
}

int cmd_vn_test(std::uint64_t seed, int pairs, Eigen::Index rows, Eigen::Index cols) {
    if (pairs < 1 || rows < 1 || cols < 1) throw InputError("vn-test needs positive pairs, rows and cols");
    std::mt19937_64 rng(seed);
    double min_random = 0, max_aligned = 0;
    for (int k = 0; k < pairs; ++k) {
        const Matrix a = gaussian_matrix(rows, cols, rng());
        const Matrix b = gaussian_matrix(rows, cols, rng());
        min_random = std::min(min_random, von_neumann_gap(a, b) / (1 + a.norm() * b.norm()));

        // Same singular vectors as a, different singular values.
        OrderedSvd s = svd_ordered(a);
        Vector sb = s.sigma;
        std::uniform_real_distribution<double> u(0, 3);
        for (Eigen::Index i = 0; i < sb.size(); ++i) sb(i) = u(rng);
        std::sort(sb.data(), sb.data() + sb.size(), std::greater<>());
        const Matrix aligned = s.compose(sb);
        max_aligned = std::max(max_aligned, std::abs(von_neumann_gap(a, aligned)) / (1 + a.norm() * aligned.norm()));
    }
    const bool ok = min_random >= -1e-10 && max_aligned <= 1e-10;
    fmt::print("pairs: {} ({}x{})\nmin scaled gap (random): {:.3e}\nmax scaled gap (aligned): {:.3e}\n{}\n", pairs, rows,
               cols, min_random, max_aligned, ok ? "PASS" : "FAIL");
    return ok ? 0 : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-form minimizers of l2-regularized deep matrix factorization"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalFlags g;
    app.add_option("--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", g.seed, "Seed for generated targets and randomized checks");
    app.add_option("--out", g.out_dir, "Output directory");
    app.add_flag("--emit-svg", g.emit_svg, "Also write SVG plots");

    double m = 0, lambda = 0, fd_step = 1e-4;
    int depth = 0;
    auto* prox = app.add_subcommand("prox", "Scalar prox of (m - rho)^2 + lambda |rho|^(2/L)");
    prox->add_option("--m", m)->required();
    prox->add_option("--lambda", lambda)->required();
    prox->add_option("--depth", depth)->required();

    auto* spectrum = app.add_subcommand("spectrum", "Closed-form vs finite-difference Hessian spectrum, scalar chain");
    spectrum->add_option("--m", m)->required();
    spectrum->add_option("--lambda", lambda)->required();
    spectrum->add_option("--depth", depth)->required();
    spectrum->add_option("--fd-step", fd_step, "Relative finite-difference step");

    TargetFlags solve_flags, factor_flags, train_flags, sweep_flags;
    auto* solve = app.add_subcommand("solve", "Closed-form end-to-end minimizer");
    solve_flags.attach(solve, false, false);
    auto* factorize = app.add_subcommand("factorize", "Closed-form minimizer and its balanced factor stack");
    factor_flags.attach(factorize, false, false);
    auto* train = app.add_subcommand("train", "Best-of-grid gradient descent on the factored objective");
    train_flags.attach(train, true, false);
    auto* sweep = app.add_subcommand("sweep-collapse", "Product norm vs lambda / tau, GD and closed form");
    sweep_flags.attach(sweep, true, true);

    std::string size_class = "small", fault;
    auto* verify = app.add_subcommand("verify", "Run the property suite");
    verify->add_option("--size-class", size_class, "small | full");
    verify->add_option("--inject-fault", fault, "Negative control (gradient-sign)")->group("");

    int pairs = 10000;
    Eigen::Index vn_rows = 6, vn_cols = 4;
    auto* vn = app.add_subcommand("vn-test", "Monte Carlo check of the von Neumann trace inequality");
    vn->add_option("--pairs", pairs);
    vn->add_option("--rows", vn_rows);
    vn->add_option("--cols", vn_cols);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }
    g.seed_given = seed_opt->count() > 0;

    try {
        if (*prox) return cmd_prox(m, lambda, depth);
        if (*spectrum) return cmd_spectrum(m, lambda, depth, fd_step);
        if (*solve) return cmd_solve(solve_flags.resolve(g));
        if (*factorize) return cmd_factorize(factor_flags.resolve(g));
        if (*train) return cmd_train(train_flags.resolve(g));
        if (*sweep) return cmd_sweep(sweep_flags.resolve(g));
        if (*verify) return cmd_verify(g.seed, size_class, fault);
        if (*vn) return cmd_vn_test(g.seed, pairs, vn_rows, vn_cols);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitInput;
}
