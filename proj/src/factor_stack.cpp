#include "dmf/factor_stack.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace dmf {

void validate_dims(const Dims& dims, Eigen::Index rows, Eigen::Index cols) {
    if (dims.size() < 2) throw InputError("dims must list at least d_0 and d_1");
    if (std::any_of(dims.begin(), dims.end(), [](Eigen::Index d) { return d < 1; })) {
        throw InputError("every layer width must be >= 1");
    }
    if (dims.front() != cols || dims.back() != rows) {
        throw InputError(fmt::format("dims ({} ... {}) do not match a {}x{} product", dims.front(), dims.back(), rows,
                                     cols));
    }
    const Eigen::Index capacity = std::min(rows, cols);
    const Eigen::Index narrowest = *std::min_element(dims.begin(), dims.end());
    if (narrowest < capacity) {
        throw InputError(fmt::format("infeasible dims: narrowest layer {} < min(rows, cols) = {}", narrowest, capacity));
    }
}

Dims uniform_dims(Eigen::Index rows, Eigen::Index cols, int depth, Eigen::Index hidden) {
    if (depth < 1) throw InputError("depth must be >= 1");
    Dims dims(static_cast<std::size_t>(depth) + 1, hidden);
    dims.front() = cols;
    dims.back() = rows;
    return dims;
}

Eigen::Index parameter_count(const Dims& dims) {
    Eigen::Index n = 0;
    for (std::size_t i = 1; i < dims.size(); ++i) n += dims[i] * dims[i - 1];
    return n;
}

FactorStack::FactorStack(std::vector<Matrix> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InputError("a factor stack needs at least one layer");
    dims_.push_back(layers_.front().cols());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].cols() != dims_.back()) {
            throw InputError(fmt::format("layer {} has {} columns, expected {}", i + 1, layers_[i].cols(), dims_.back()));
        }
        if (layers_[i].rows() < 1 || layers_[i].cols() < 1) throw InputError("layers must be non-empty");
        dims_.push_back(layers_[i].rows());
    }
}

FactorStack FactorStack::zeros(const Dims& dims) {
    if (dims.size() < 2) throw InputError("dims must list at least d_0 and d_1");
    std::vector<Matrix> layers;
    for (std::size_t i = 1; i < dims.size(); ++i) layers.push_back(Matrix::Zero(dims[i], dims[i - 1]));
    return FactorStack(std::move(layers));
}

FactorStack FactorStack::unflatten(const Dims& dims, const Vector& params) {
    if (params.size() != dmf::parameter_count(dims)) {
        throw InputError(fmt::format("expected {} parameters, got {}", dmf::parameter_count(dims), params.size()));
    }
    std::vector<Matrix> layers;
    Eigen::Index offset = 0;
    for (std::size_t i = 1; i < dims.size(); ++i) {
        const Eigen::Index n = dims[i] * dims[i - 1];
        layers.push_back(Eigen::Map<const Matrix>(params.data() + offset, dims[i], dims[i - 1]));
        offset += n;
    }
    return FactorStack(std::move(layers));
}

Matrix FactorStack::product() const {
    Matrix p = layers_.front();
    for (std::size_t i = 1; i < layers_.size(); ++i) p = layers_[i] * p;
    return p;
}

Vector FactorStack::flatten() const {
    Vector out(parameter_count());
    Eigen::Index offset = 0;
    for (const Matrix& w : layers_) {
        Eigen::Map<Matrix>(out.data() + offset, w.rows(), w.cols()) = w;
        offset += w.size();
    }
    return out;
}

std::vector<double> FactorStack::layer_norms() const {
    std::vector<double> out;
    out.reserve(layers_.size());
    for (const Matrix& w : layers_) out.push_back(w.norm());
    return out;
}

double FactorStack::squared_norm() const {
    double acc = 0;
    for (const Matrix& w : layers_) acc += w.squaredNorm();
    return acc;
}

}  // namespace dmf
