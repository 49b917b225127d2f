#include "dmf/experiments.hpp"
#include "dmf/matrix_solver.hpp"
#include "dmf/scalar_prox.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace dmf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dmf_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DMF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesAllKeys) {
    const json j = json::parse(R"({
        "rows": 4, "cols": 5, "seed": 9, "depth": 4, "alpha": 0.5, "hidden": 7,
        "gd": {"step_sizes": [0.01], "init_scales": [1.0], "seeds": [3, 4], "max_iters": 100, "grad_tol": 1e-6},
        "alphas": [0.5, 1.5], "output_dir": "runs", "emit_svg": true, "threads": 2
    })");
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    EXPECT_EQ(c.rows, 4);
    EXPECT_EQ(c.cols, 5);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.depth, 4);
    EXPECT_EQ(c.alpha, 0.5);
    EXPECT_FALSE(c.lambda.has_value());
    EXPECT_EQ(c.gd.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(c.gd.max_iters, 100);
    EXPECT_EQ(c.alphas, (std::vector<double>{0.5, 1.5}));
    EXPECT_TRUE(c.emit_svg);
}

TEST(Config, RejectsUnknownAndConflictingKeys) {
    EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"lamda": 1})")), InputError);
    EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"gd": {"step": 1}})")), InputError);
    EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"lambda": 1, "alpha": 1})")), InputError);
    EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"target_path": "a.csv", "rows": 3})")), InputError);
    EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"depth": "three"})")), InputError);
    EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"depth": 2, "alpha": 0.5})")), InputError);
    EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"depth": 3, "dims": [4, 4]})")), InputError);
    EXPECT_THROW(ExperimentConfig::from_json(json::parse("[1, 2]")), InputError);
}

TEST(Config, FromFile) {
    const fs::path dir = scratch_dir("config");
    std::ofstream(dir / "ok.json") << R"({"rows": 3, "cols": 3, "lambda": 0.5})";
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_EQ(ExperimentConfig::from_file(dir / "ok.json").lambda, 0.5);
    EXPECT_THROW(ExperimentConfig::from_file(dir / "bad.json"), InputError);
    EXPECT_THROW(ExperimentConfig::from_file(dir / "missing.json"), InputError);
}

TEST(Targets, GaussianIsSeeded) {
    EXPECT_EQ(gaussian_matrix(3, 4, 1), gaussian_matrix(3, 4, 1));
    EXPECT_NE(gaussian_matrix(3, 4, 1), gaussian_matrix(3, 4, 2));
}

TEST(Targets, AlphaResolvesAgainstCollapseThreshold) {
    ExperimentConfig c;
    c.rows = 3;
    c.cols = 4;
    c.alpha = 1.0;
    const Matrix t = load_target(c);
    const double lambda = resolve_lambda(c, t);
    EXPECT_NEAR(threshold_m_bar(lambda, 3), singular_values(t)(0), 1e-12);
    EXPECT_EQ(resolve_dims(c, t), uniform_dims(3, 4, 3, 16));
}

TEST(Emitters, SigmasCsvIsByteStable) {
    const fs::path dir = scratch_dir("sigmas");
    const MatrixSolution sol = solve_closed_form(ProblemSpec(gaussian_matrix(3, 4, 8), 3, 0.5));
    write_sigmas_csv(dir / "a.csv", sol);
    write_sigmas_csv(dir / "b.csv", sol);
    const std::string a = slurp(dir / "a.csv");
    EXPECT_EQ(a, slurp(dir / "b.csv"));
    EXPECT_EQ(a.substr(0, a.find('\n')), "index,sigma_target,sigma_star,branch,unique");
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
}

TEST(Emitters, FormatRealRoundTrips) {
    for (double x : {0.1, 1.0 / 3, 1e-300, -2.5e17}) EXPECT_EQ(std::stod(format_real(x)), x);
}

TEST(Emitters, JsonFields) {
    const json j = to_json(prox_scalar(3, 4, 3));
    EXPECT_EQ(j.at("branch"), "Interior");
    EXPECT_TRUE(j.at("unique").get<bool>());
    const json s = to_json(solve_closed_form(ProblemSpec(Matrix::Identity(2, 2) * 3, 3, 4)));
    EXPECT_TRUE(s.contains("sigma_star"));
    EXPECT_TRUE(s.contains("on_measure_zero_set"));
}

TEST(Sweep, SingleRowAndCsvLayout) {
    const Matrix target = gaussian_matrix(3, 4, 11);
    GdGridOverrides gd;
    gd.step_sizes = {1e-2};
    gd.init_scales = {1.0};
    gd.seeds = {0, 1};
    gd.max_iters = 3000;
    const auto rows = run_collapse_sweep(target, 3, uniform_dims(3, 4, 3, 5), {0.5, 1.5}, gd, 1);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].alpha, 0.5);
    EXPECT_NEAR(rows[0].gd_product_fro, rows[0].closedform_product_fro, 1e-3 * rows[0].closedform_product_fro);
    EXPECT_EQ(rows[1].closedform_product_fro, 0.0);
    EXPECT_LE(rows[1].gd_product_fro, 1e-3);

    const std::string csv = sweep_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "alpha,lambda,gd_product_fro,closedform_product_fro,best_objective,closedform_objective,"
              "best_step_size,best_init_scale,best_seed");
    EXPECT_EQ(csv, sweep_csv(run_collapse_sweep(target, 3, uniform_dims(3, 4, 3, 5), {0.5, 1.5}, gd, 2)));
    const std::string svg = sweep_svg(rows);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(ScalarChain, SignPatternsAndSpectrum) {
    EXPECT_EQ(admissible_sign_patterns(1.0, 3).size(), 4u);
    EXPECT_EQ(admissible_sign_patterns(0.0, 3).size(), 8u);
    for (const auto& signs : admissible_sign_patterns(-2.0, 3)) {
        EXPECT_NEAR(balanced_scalar_stack(-2.0, 3, signs).product()(0, 0), -2.0, 1e-12);
    }
    const SpectrumComparison cmp = compare_scalar_spectrum(3, 4, 3);
    EXPECT_LE(cmp.max_rel_error, 1e-4);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("prox --m 3 --lambda 4 --depth 3"), 0);
    EXPECT_EQ(run_cli("prox --m 3 --lambda 0 --depth 3"), 2);
    EXPECT_EQ(run_cli("prox --m 3 --depth 3"), 2);
    EXPECT_EQ(run_cli("no-such-command"), 2);
    EXPECT_EQ(run_cli("solve --target /nonexistent.csv --depth 3 --lambda 1"), 2);
    EXPECT_EQ(run_cli("verify --size-class small --seed 3"), 0);
    EXPECT_EQ(run_cli("verify --size-class small --inject-fault gradient-sign"), 1);
    EXPECT_EQ(run_cli("verify --size-class huge"), 2);
}

TEST(Cli, SolveWritesArtifacts) {
    const fs::path dir = scratch_dir("cli_solve");
    ASSERT_EQ(run_cli("solve --rows 3 --cols 4 --depth 3 --alpha 0.5 --out " + dir.string()), 0);
    const json sol = json::parse(slurp(dir / "solution.json"));
    EXPECT_EQ(sol.at("sigma_star").size(), 3u);
    EXPECT_TRUE(fs::exists(dir / "sigmas.csv"));

    ASSERT_EQ(run_cli("factorize --rows 3 --cols 4 --depth 3 --lambda 0.5 --hidden 4 --out " + dir.string()), 0);
    for (int i = 1; i <= 3; ++i) EXPECT_TRUE(fs::exists(dir / ("W" + std::to_string(i) + ".csv")));
}
