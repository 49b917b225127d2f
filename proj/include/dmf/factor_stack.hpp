#pragma once

#include "dmf/core_types.hpp"

#include <vector>

namespace dmf {

/// Layer widths (d_0, ..., d_L). Layer W_i maps R^{d_{i-1}} -> R^{d_i}.
using Dims = std::vector<Eigen::Index>;

/// Throws InputError unless `dims` describes a depth-L stack whose product
/// is rows x cols and whose narrowest layer can carry min(rows, cols).
void validate_dims(const Dims& dims, Eigen::Index rows, Eigen::Index cols);

/// Dims (cols, hidden, ..., hidden, rows) for a depth-L stack.
Dims uniform_dims(Eigen::Index rows, Eigen::Index cols, int depth, Eigen::Index hidden);

/// N = sum_i d_i d_{i-1}.
Eigen::Index parameter_count(const Dims& dims);

/// Ordered layers W_1 ... W_L (stored 0-based: layers()[0] is W_1).
class FactorStack {
public:
    explicit FactorStack(std::vector<Matrix> layers);

    static FactorStack zeros(const Dims& dims);
    /// Inverse of flatten(); entries are taken layer by layer, column-major.
    static FactorStack unflatten(const Dims& dims, const Vector& params);

    int depth() const noexcept { return static_cast<int>(layers_.size()); }
    const Dims& dims() const noexcept { return dims_; }
    Eigen::Index parameter_count() const noexcept { return dmf::parameter_count(dims_); }

    const std::vector<Matrix>& layers() const noexcept { return layers_; }
    const Matrix& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
    /// Mutable access; the shape must not change.
    Matrix& layer(int i) { return layers_.at(static_cast<std::size_t>(i)); }

    /// W_L ... W_1.
    Matrix product() const;
    Vector flatten() const;
    /// ||W_i||_F for i = 1..L.
    std::vector<double> layer_norms() const;
    /// sum_i ||W_i||_F^2.
    double squared_norm() const;

private:
    std::vector<Matrix> layers_;
    Dims dims_;
};

}  // namespace dmf
