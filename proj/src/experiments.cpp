#include "dmf/experiments.hpp"

#include "parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace dmf {

namespace {

template <typename T>
std::vector<T> vector_of(const json& j, const char* key) {
    if (!j.is_array()) throw InputError(fmt::format("config key '{}' must be an array", key));
    return j.get<std::vector<T>>();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw InputError("config must be a JSON object");
    static const std::set<std::string> known{"target_path", "rows",   "cols",       "seed",     "depth",
                                             "lambda",      "alpha",  "dims",       "hidden",   "gd",
                                             "alphas",      "output_dir", "emit_svg", "threads"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw InputError(fmt::format("unknown config key '{}'", key));
    }

    ExperimentConfig c;
    try {
        const bool has_generator = j.contains("rows") || j.contains("cols");
        if (j.contains("target_path")) {
            if (has_generator) throw InputError("config gives both target_path and generator rows/cols");
            c.target_path = j.at("target_path").get<std::string>();
        }
        if (j.contains("rows")) c.rows = j.at("rows").get<Eigen::Index>();
        if (j.contains("cols")) c.cols = j.at("cols").get<Eigen::Index>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("depth")) c.depth = j.at("depth").get<int>();
        if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
        if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
        if (j.contains("dims")) c.dims = vector_of<Eigen::Index>(j.at("dims"), "dims");
        if (j.contains("hidden")) c.hidden = j.at("hidden").get<Eigen::Index>();
        if (j.contains("alphas")) c.alphas = vector_of<double>(j.at("alphas"), "alphas");
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("emit_svg")) c.emit_svg = j.at("emit_svg").get<bool>();
        if (j.contains("threads")) c.threads = j.at("threads").get<unsigned>();
        if (j.contains("gd")) {
            const json& g = j.at("gd");
            if (!g.is_object()) throw InputError("config key 'gd' must be an object");
            for (const auto& [key, _] : g.items()) {
                if (key != "step_sizes" && key != "init_scales" && key != "seeds" && key != "max_iters" &&
                    key != "grad_tol") {
                    throw InputError(fmt::format("unknown gd config key '{}'", key));
                }
            }
            if (g.contains("step_sizes")) c.gd.step_sizes = vector_of<double>(g.at("step_sizes"), "gd.step_sizes");
            if (g.contains("init_scales")) c.gd.init_scales = vector_of<double>(g.at("init_scales"), "gd.init_scales");
            if (g.contains("seeds")) c.gd.seeds = vector_of<std::uint64_t>(g.at("seeds"), "gd.seeds");
            if (g.contains("max_iters")) c.gd.max_iters = g.at("max_iters").get<int>();
            if (g.contains("grad_tol")) c.gd.grad_tol = g.at("grad_tol").get<double>();
        }
    } catch (const json::exception& e) {
        throw InputError(fmt::format("config: {}", e.what()));
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError(fmt::format("cannot open config '{}'", path.string()));
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw InputError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
    }
}

void ExperimentConfig::validate() const {
    if (depth < 1) throw InputError("depth must be >= 1");
    if (!target_path && (rows < 1 || cols < 1)) throw InputError("generator rows/cols must be >= 1");
    if (lambda && alpha) throw InputError("give either lambda or alpha, not both");
    if (lambda && !(*lambda > 0)) throw InputError("lambda must be positive");
    if (alpha && !(*alpha > 0)) throw InputError("alpha must be positive");
    if (alpha && depth < 3) throw InputError("alpha is defined through the collapse threshold and needs depth >= 3");
    if (hidden < 1) throw InputError("hidden width must be >= 1");
    if (dims && dims->size() != static_cast<std::size_t>(depth) + 1) {
        throw InputError(fmt::format("dims has {} entries, depth {} needs {}", dims->size(), depth, depth + 1));
    }
    for (double a : alphas) {
        if (!(a > 0)) throw InputError("sweep alphas must be positive");
    }
    if (gd.step_sizes.empty() || gd.init_scales.empty() || gd.seeds.empty()) throw InputError("gd grid is empty");
    if (gd.max_iters < 1) throw InputError("gd.max_iters must be >= 1");
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    if (rows < 1 || cols < 1) throw InputError("gaussian_matrix needs positive dimensions");
    std::mt19937_64 rng(detail::mix_seed(seed ^ 0x5eedf00dULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    }
    return m;
}

Matrix load_target(const ExperimentConfig& config) {
    if (config.target_path) return read_matrix_csv(*config.target_path);
    return gaussian_matrix(config.rows, config.cols, config.seed);
}

double resolve_lambda(const ExperimentConfig& config, const Matrix& target) {
    if (config.lambda) return *config.lambda;
    if (config.alpha) return *config.alpha * collapse_lambda(singular_values(target)(0), config.depth);
    throw InputError("either lambda or alpha is required");
}

Dims resolve_dims(const ExperimentConfig& config, const Matrix& target) {
    Dims dims = config.dims ? *config.dims : uniform_dims(target.rows(), target.cols(), config.depth, config.hidden);
    validate_dims(dims, target.rows(), target.cols());
    return dims;
}

std::vector<double> default_alphas() {
    std::vector<double> out;
    for (int k = 1; k <= 20; ++k) out.push_back(k / 10.0);
    return out;
}

std::vector<GdConfig> grid_from(const GdGridOverrides& gd, const Dims& dims) {
    return make_grid(dims, gd.step_sizes, gd.init_scales, gd.seeds, gd.max_iters, gd.grad_tol);
}

std::string format_real(double x) { return fmt::format("{:.17g}", x); }

json to_json(const ProxResult& r) {
    return {{"minimizer", r.minimizer},
            {"candidates", r.candidates},
            {"branch", std::string(to_string(r.branch))},
            {"unique", r.unique},
            {"threshold_m_bar", r.threshold_m_bar}};
}

json to_json(const ScalarSpectrum& s) {
    return {{"bulk_eig", s.bulk_eig},
            {"top_eig", s.top_eig},
            {"lambda_max", s.lambda_max},
            {"layer_magnitude", s.layer_magnitude},
            {"eigenvalues", s.eigenvalues}};
}

json to_json(const MatrixSolution& s) {
    json prox = json::array();
    for (const ProxResult& r : s.prox_results) prox.push_back(to_json(r));
    return {{"sigma_target", vec_json(s.svd.sigma)},
            {"sigma_star", vec_json(s.sigma_star)},
            {"unique", s.unique},
            {"on_measure_zero_set", s.on_measure_zero_set},
            {"offending_indices", s.offending_indices},
            {"objective", s.objective_value},
            {"prox_results", prox},
            {"warnings", s.warnings}};
}

json to_json(const GdConfig& c) {
    return {{"step_size", c.step_size},   {"max_iters", c.max_iters}, {"init_scale", c.init_scale},
            {"seed", c.seed},             {"grad_tol", c.grad_tol},   {"dims", c.dims}};
}

json to_json(const TrainTrace& t) {
    return {{"config", to_json(t.config)},
            {"iterations", t.objective_history.size()},
            {"final_objective", t.final_objective},
            {"final_grad_norm", t.final_grad_norm},
            {"final_product_fro", t.final_stack.product().norm()},
            {"layer_norms", t.final_stack.layer_norms()},
            {"converged", t.converged},
            {"diverged", t.diverged},
            {"objective_history", t.objective_history},
            {"product_fro_history", t.product_fro_history}};
}

void write_sigmas_csv(const std::filesystem::path& path, const MatrixSolution& s) {
    std::string text = "index,sigma_target,sigma_star,branch,unique\n";
    for (std::size_t i = 0; i < s.prox_results.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        text += fmt::format("{},{},{},{},{}\n", i + 1, format_real(s.svd.sigma(k)), format_real(s.sigma_star(k)),
                            to_string(s.prox_results[i].branch), s.prox_results[i].unique ? "true" : "false");
    }
    write_text(path, text);
}

void write_history_csv(const std::filesystem::path& path, const TrainTrace& t) {
    std::string text = "iter,objective,product_fro\n";
    for (std::size_t i = 0; i < t.objective_history.size(); ++i) {
        text += fmt::format("{},{},{}\n", i, format_real(t.objective_history[i]), format_real(t.product_fro_history[i]));
    }
    write_text(path, text);
}

std::vector<SweepRow> run_collapse_sweep(const Matrix& target, int depth, const Dims& dims,
                                         const std::vector<double>& alphas, const GdGridOverrides& gd,
                                         unsigned threads) {
    if (depth < 3) throw InputError("collapse sweep needs depth >= 3");
    validate_dims(dims, target.rows(), target.cols());
    const double tau = collapse_lambda(singular_values(target)(0), depth);
    const std::vector<GdConfig> grid = grid_from(gd, dims);

    std::vector<SweepRow> rows(alphas.size());
    // Rows run in parallel; each grid search stays serial so work is not
    // oversubscribed.
    detail::parallel_for(alphas.size(), threads, [&](std::size_t i) {
        const ProblemSpec spec(target, depth, alphas[i] * tau);
        const TrainTrace best = gd_grid_search(spec, grid, 1);
        const MatrixSolution closed = solve_closed_form(spec);
        rows[i] = SweepRow{.alpha = alphas[i],
                           .lambda = spec.lambda(),
                           .gd_product_fro = best.final_stack.product().norm(),
                           .closedform_product_fro = closed.m_star.norm(),
                           .best_objective = best.final_objective,
                           .closedform_objective = closed.objective_value,
                           .best_step_size = best.config.step_size,
                           .best_init_scale = best.config.init_scale,
                           .best_seed = best.config.seed};
    });
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string text =
        "alpha,lambda,gd_product_fro,closedform_product_fro,best_objective,closedform_objective,best_step_size,"
        "best_init_scale,best_seed\n";
    for (const SweepRow& r : rows) {
        text += fmt::format("{},{},{},{},{},{},{},{},{}\n", format_real(r.alpha), format_real(r.lambda),
                            format_real(r.gd_product_fro), format_real(r.closedform_product_fro),
                            format_real(r.best_objective), format_real(r.closedform_objective),
                            format_real(r.best_step_size), format_real(r.best_init_scale), r.best_seed);
    }
    return text;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    write_text(path, sweep_csv(rows));
}

std::string sweep_svg(const std::vector<SweepRow>& rows) {
    constexpr double width = 640, height = 400, margin = 50;
    double xmax = 0, ymax = 0;
    for (const SweepRow& r : rows) {
        xmax = std::max(xmax, r.alpha);
        ymax = std::max({ymax, r.gd_product_fro, r.closedform_product_fro});
    }
    xmax = std::max(xmax, 1.0);
    if (ymax <= 0) ymax = 1;
    auto px = [&](double a) { return margin + (width - 2 * margin) * a / xmax; };
    auto py = [&](double v) { return height - margin - (height - 2 * margin) * v / ymax; };

    auto polyline = [&](auto value, const char* color, bool dashed) {
        std::string pts;
        for (const SweepRow& r : rows) pts += fmt::format("{:.2f},{:.2f} ", px(r.alpha), py(value(r)));
        return fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="2"{} points="{}"/>)", color,
                           dashed ? R"( stroke-dasharray="6,4")" : "", pts);
    };

    std::ostringstream svg;
    svg << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">)", width, height) << '\n';
    svg << fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)", width, height) << '\n';
    svg << fmt::format(R"(<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>)", margin, height - margin,
                       width - margin)
        << '\n';
    svg << fmt::format(R"(<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>)", margin, height - margin, margin)
        << '\n';
    svg << fmt::format(R"(<line x1="{0:.2f}" y1="{1}" x2="{0:.2f}" y2="{2}" stroke="gray" stroke-dasharray="2,3"/>)",
                       px(1.0), height - margin, margin)
        << '\n';
    svg << polyline([](const SweepRow& r) { return r.closedform_product_fro; }, "black", true) << '\n';
    svg << polyline([](const SweepRow& r) { return r.gd_product_fro; }, "#d62728", false) << '\n';
    svg << fmt::format(R"(<text x="{}" y="{}" font-size="14" text-anchor="middle">alpha (lambda / tau)</text>)",
                       width / 2, height - 12)
        << '\n';
    svg << fmt::format(R"svg(<text x="14" y="{}" font-size="14" transform="rotate(-90 14 {})" text-anchor="middle">)svg"
                       R"svg(||W_L...W_1||_F</text>)svg",
                       height / 2, height / 2)
        << '\n';
    svg << fmt::format(R"(<text x="{}" y="{}" font-size="12">max {:.4g}</text>)", margin + 4, margin - 8, ymax) << '\n';
    svg << fmt::format(R"(<text x="{}" y="{}" font-size="12" fill="#d62728">GD best of grid</text>)", width - 200,
                       margin)
        << '\n';
    svg << fmt::format(R"(<text x="{}" y="{}" font-size="12">closed form (dashed)</text>)", width - 200, margin + 16)
        << '\n';
    svg << "</svg>\n";
    return svg.str();
}

FactorStack balanced_scalar_stack(double rho, int depth, const std::vector<int>& signs) {
    if (depth < 1 || signs.size() != static_cast<std::size_t>(depth)) {
        throw InputError("balanced_scalar_stack needs one sign per layer");
    }
    const double w = std::pow(std::abs(rho), 1.0 / depth);
    int sign_product = 1;
    std::vector<Matrix> layers;
    for (int s : signs) {
        if (s != 1 && s != -1) throw InputError("signs must be +1 or -1");
        sign_product *= s;
        layers.push_back(Matrix::Constant(1, 1, s * w));
    }
    if (rho != 0 && (sign_product > 0) != (rho > 0)) throw InputError("sign pattern does not reproduce sign(rho)");
    return FactorStack(std::move(layers));
}

std::vector<std::vector<int>> admissible_sign_patterns(double rho, int depth) {
    if (depth < 1 || depth > 20) throw InputError("admissible_sign_patterns supports depth 1..20");
    std::vector<std::vector<int>> out;
    for (unsigned mask = 0; mask < (1u << depth); ++mask) {
        std::vector<int> s(static_cast<std::size_t>(depth));
        int product = 1;
        for (int i = 0; i < depth; ++i) {
            s[static_cast<std::size_t>(i)] = (mask >> i) & 1u ? -1 : 1;
            product *= s[static_cast<std::size_t>(i)];
        }
        if (rho == 0 || (product > 0) == (rho > 0)) out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> symmetric_eigenvalues(const Matrix& h) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    const Vector& v = eig.eigenvalues();
    return {v.data(), v.data() + v.size()};
}

SpectrumComparison compare_scalar_spectrum(double m, double lambda, int depth, double fd_step) {
    SpectrumComparison out{.closed_form = hessian_spectrum_scalar(m, lambda, depth), .fd_eigenvalues = {}};
    const double rho = prox_scalar(m, lambda, depth).minimizer;
    std::vector<int> signs(static_cast<std::size_t>(depth), 1);
    if (rho < 0) signs.back() = -1;
    const ProblemSpec spec(Matrix::Constant(1, 1, m), depth, lambda);
    out.fd_eigenvalues = symmetric_eigenvalues(hessian_fd(spec, balanced_scalar_stack(rho, depth, signs), fd_step));
    for (std::size_t i = 0; i < out.fd_eigenvalues.size(); ++i) {
        const double cf = out.closed_form.eigenvalues[i];
        out.max_rel_error = std::max(out.max_rel_error, std::abs(out.fd_eigenvalues[i] - cf) / std::abs(cf));
    }
    return out;
}

}  // namespace dmf
