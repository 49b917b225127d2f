#include "dmf/core_types.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace dmf {

void Tolerances::validate() const {
    if (!(root_tol > 0 && tie_tol > 0 && svd_tol > 0 && rank_tol > 0)) {
        throw InputError("tolerances must be strictly positive");
    }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

ProblemSpec::ProblemSpec(Matrix target, int depth, double lambda)
    : target_(std::move(target)), depth_(depth), lambda_(lambda), q_(2.0 / depth) {
    if (depth_ < 1) throw InputError(fmt::format("depth must be >= 1, got {}", depth_));
    if (!(lambda_ > 0) || !std::isfinite(lambda_)) {
        throw InputError(fmt::format("lambda must be a positive finite real, got {}", lambda_));
    }
    if (target_.size() == 0) throw InputError("target matrix is empty");
    if (!all_finite(target_)) throw InputError("target matrix has non-finite entries");
}

Matrix OrderedSvd::compose(const Vector& s) const {
    const Eigen::Index r = std::min(u.cols(), v.cols());
    const Eigen::Index k = std::min<Eigen::Index>(r, s.size());
    return u.leftCols(k) * s.head(k).asDiagonal() * v.leftCols(k).transpose();
}

namespace {

// Flip column j so that its largest-magnitude entry is positive; returns
// whether a flip happened. Ties resolve to the first index.
bool canonical_sign(Eigen::Ref<Vector> col) {
    Eigen::Index idx = 0;
    col.cwiseAbs().maxCoeff(&idx);
    if (col(idx) < 0) {
        col = -col;
        return true;
    }
    return false;
}

}  // namespace

OrderedSvd svd_ordered(const Matrix& m, const Tolerances& tol) {
    tol.validate();
    if (m.size() == 0) throw InputError("svd of an empty matrix");
    if (!all_finite(m)) throw InputError("svd input has non-finite entries");

    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) throw NumericalError("SVD did not converge");

    OrderedSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    const Eigen::Index r = out.sigma.size();

    // Eigen already sorts, but the contract is explicit about it.
    for (Eigen::Index i = 1; i < r; ++i) {
        if (out.sigma(i) > out.sigma(i - 1)) throw NumericalError("SVD returned unsorted singular values");
    }

    for (Eigen::Index j = 0; j < out.u.cols(); ++j) {
        const bool flipped = canonical_sign(out.u.col(j));
        if (flipped && j < r) out.v.col(j) = -out.v.col(j);
    }
    for (Eigen::Index j = r; j < out.v.cols(); ++j) canonical_sign(out.v.col(j));

    const double orth_u = (out.u.transpose() * out.u - Matrix::Identity(out.u.cols(), out.u.cols())).cwiseAbs().maxCoeff();
    const double orth_v = (out.v.transpose() * out.v - Matrix::Identity(out.v.cols(), out.v.cols())).cwiseAbs().maxCoeff();
    const double dim = static_cast<double>(std::max(m.rows(), m.cols()));
    if (orth_u > tol.svd_tol * dim || orth_v > tol.svd_tol * dim) {
        throw NumericalError(fmt::format("SVD factors lost orthogonality ({:.3e}, {:.3e})", orth_u, orth_v));
    }
    return out;
}

Vector singular_values(const Matrix& m) {
    if (!all_finite(m)) throw InputError("singular_values input has non-finite entries");
    Eigen::BDCSVD<Matrix> svd(m);
    if (svd.info() != Eigen::Success) throw NumericalError("SVD did not converge");
    return svd.singularValues();
}

double schatten_q_sigma(const Vector& sigma, double q) {
    if (!(q > 0 && q <= 2)) throw InputError(fmt::format("schatten exponent must lie in (0, 2], got {}", q));
    double acc = 0;
    for (double s : sigma) {
        if (s > 0) acc += std::pow(s, q);
    }
    return acc;
}

double schatten_q(const Matrix& m, double q) {
    if (!(q > 0 && q <= 2)) throw InputError(fmt::format("schatten exponent must lie in (0, 2], got {}", q));
    // Singular values at rounding level would contribute eps^q, which is far
    // from negligible for small q; they count as exact zeros.
    Vector sigma = singular_values(m);
    const double cutoff = sigma.size() > 0 ? Tolerances{}.rank_tol * sigma(0) : 0.0;
    for (double& x : sigma) {
        if (x <= cutoff) x = 0;
    }
    return schatten_q_sigma(sigma, q);
}

double von_neumann_gap(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InputError(fmt::format("von_neumann_gap shape mismatch: {}x{} vs {}x{}", a.rows(), a.cols(), b.rows(),
                                     b.cols()));
    }
    const Vector sa = singular_values(a);
    const Vector sb = singular_values(b);
    // tr(a b^T) = <a, b>_F
    return sa.dot(sb) - (a.array() * b.array()).sum();
}

Matrix parse_matrix_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::istringstream fields(line);
        std::string field;
        while (std::getline(fields, field, ',')) {
            std::size_t used = 0;
            double value = 0;
            try {
                value = std::stod(field, &used);
            } catch (const std::exception&) {
                throw InputError(fmt::format("line {}: cannot parse '{}' as a number", line_no, field));
            }
            if (field.find_first_not_of(" \t", used) != std::string::npos) {
                throw InputError(fmt::format("line {}: trailing characters in '{}'", line_no, field));
            }
            if (!std::isfinite(value)) throw InputError(fmt::format("line {}: non-finite entry", line_no));
            row.push_back(value);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw InputError(fmt::format("line {}: expected {} columns, got {}", line_no, rows.front().size(), row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError("matrix CSV is empty");

    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError(fmt::format("cannot open matrix file '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_matrix_csv(buf.str());
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw InputError(fmt::format("cannot write matrix file '{}'", path.string()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << fmt::format("{:.17g}", m(i, j));
        }
        out << '\n';
    }
}

}  // namespace dmf
