#pragma once

// Experiment plumbing shared by the CLI and the tests: configuration,
// target generation, JSON/CSV/SVG emitters and the collapse sweep.

#include "dmf/core_types.hpp"
#include "dmf/gd_trainer.hpp"
#include "dmf/matrix_solver.hpp"
#include "dmf/scalar_prox.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dmf {

using json = nlohmann::json;

struct GdGridOverrides {
    std::vector<double> step_sizes{3e-3, 1e-2, 3e-2};
    std::vector<double> init_scales{1e-1, 1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    int max_iters = 3000;
    double grad_tol = 1e-8;
};

struct ExperimentConfig {
    std::optional<std::filesystem::path> target_path;
    // Gaussian generator, used when target_path is absent.
    Eigen::Index rows = 10;
    Eigen::Index cols = 12;
    std::uint64_t seed = 0;

    int depth = 3;
    std::optional<double> lambda;
    std::optional<double> alpha;  ///< lambda = alpha * collapse_lambda(sigma_max, L)
    std::optional<Dims> dims;
    Eigen::Index hidden = 16;     ///< width of hidden layers when dims is absent

    GdGridOverrides gd;
    std::vector<double> alphas;   ///< sweep grid; defaults to 0.1, 0.2, ..., 2.0
    std::filesystem::path output_dir = "out";
    bool emit_svg = false;
    unsigned threads = 0;

    /// Parses the JSON config format; unknown keys are rejected.
    static ExperimentConfig from_json(const json& j);
    static ExperimentConfig from_file(const std::filesystem::path& path);
    void validate() const;
};

/// Matrix with i.i.d. N(0, 1) entries from a seeded generator.
Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

Matrix load_target(const ExperimentConfig& config);
/// lambda from config, resolving alpha against the target's collapse threshold.
double resolve_lambda(const ExperimentConfig& config, const Matrix& target);
Dims resolve_dims(const ExperimentConfig& config, const Matrix& target);
std::vector<double> default_alphas();
std::vector<GdConfig> grid_from(const GdGridOverrides& gd, const Dims& dims);

/// Shortest-round-trip-safe fixed formatting used in every CSV ("%.17g").
std::string format_real(double x);

json to_json(const ProxResult& r);
json to_json(const ScalarSpectrum& s);
/// {sigma_target, sigma_star, unique, on_measure_zero_set, objective, ...}
json to_json(const MatrixSolution& s);
json to_json(const TrainTrace& t);
json to_json(const GdConfig& c);

/// Columns: index, sigma_target, sigma_star, branch, unique.
void write_sigmas_csv(const std::filesystem::path& path, const MatrixSolution& s);
/// Columns: iter, objective, product_fro.
void write_history_csv(const std::filesystem::path& path, const TrainTrace& t);

struct SweepRow {
    double alpha = 0;
    double lambda = 0;
    double gd_product_fro = 0;
    double closedform_product_fro = 0;
    double best_objective = 0;
    double closedform_objective = 0;
    double best_step_size = 0;
    double best_init_scale = 0;
    std::uint64_t best_seed = 0;
};

/// For every alpha: lambda = alpha * tau, best-of-grid GD and the closed
/// form. Rows come back in alpha order regardless of execution order.
std::vector<SweepRow> run_collapse_sweep(const Matrix& target, int depth, const Dims& dims,
                                         const std::vector<double>& alphas, const GdGridOverrides& gd,
                                         unsigned threads = 0);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);
/// Line plot of product norms against alpha.
std::string sweep_svg(const std::vector<SweepRow>& rows);

/// Scalar chain w_i = w s_i at the minimizer of the depth-L scalar problem,
/// with signs s (product sign must match the minimizer's sign).
FactorStack balanced_scalar_stack(double rho, int depth, const std::vector<int>& signs);

/// All sign patterns in {+1,-1}^L whose product equals sign(rho) (all
/// patterns when rho = 0).
std::vector<std::vector<int>> admissible_sign_patterns(double rho, int depth);

struct SpectrumComparison {
    ScalarSpectrum closed_form;
    std::vector<double> fd_eigenvalues;  ///< ascending
    double max_rel_error = 0;
};

/// Closed-form scalar spectrum against eigenvalues of hessian_fd at the
/// all-positive balanced minimizer.
SpectrumComparison compare_scalar_spectrum(double m, double lambda, int depth, double fd_step = 1e-4);

/// Ascending eigenvalues of a symmetric matrix.
std::vector<double> symmetric_eigenvalues(const Matrix& h);

}  // namespace dmf
