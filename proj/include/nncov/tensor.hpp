#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nncov/errors.hpp"

namespace nncov {

/// Dense row-major matrix. All tensors are rank 2; a vector is 1×n.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// 32-bit storage type used for inputs, weights and activations.
using Tensor = Matrix<float>;

/// Accumulator type for every reduction.
using Accum = double;

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& t) {
    return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

/// Builds a tensor from a shape and row-major data, validating both.
inline Tensor make_tensor(std::size_t rows, std::size_t cols, std::span<const float> data) {
    if (rows == 0 || cols == 0) {
        throw DimensionError("tensor dimensions must be positive, got [" + std::to_string(rows) +
                             "x" + std::to_string(cols) + "]");
    }
    if (rows * cols != data.size()) {
        throw DimensionError("tensor shape [" + std::to_string(rows) + "x" +
                             std::to_string(cols) + "] needs " + std::to_string(rows * cols) +
                             " elements, got " + std::to_string(data.size()));
    }
    Tensor t(rows, cols);
    std::copy(data.begin(), data.end(), t.data());
    return t;
}

inline Tensor make_row(std::initializer_list<float> values) {
    return make_tensor(1, values.size(), std::span<const float>(values.begin(), values.size()));
}

/// Matrix product with 64-bit accumulation, rounded to Scalar on store.
template <typename DerivedA, typename DerivedB>
auto matmul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    static_assert(std::is_same_v<Scalar, typename DerivedB::Scalar>, "mixed scalar types");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul inner dimensions differ: " + shape_string(a) + " x " +
                             shape_string(b));
    }
    Matrix<Scalar> out = (a.template cast<Accum>() * b.template cast<Accum>()).template cast<Scalar>();
    return out;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& t) {
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> out = t.cwiseMax(Scalar(0));
    return out;
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& t) {
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> out = t.unaryExpr([](Scalar v) {
        return static_cast<Scalar>(Accum(1) / (Accum(1) + std::exp(-static_cast<Accum>(v))));
    });
    return out;
}

/// Numerically stable softmax over a 1×n row.
template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& t) {
    using Scalar = typename Derived::Scalar;
    if (t.rows() != 1 || t.cols() < 1) {
        throw DimensionError("softmax expects a 1xn row, got " + shape_string(t));
    }
    RowVector<Accum> z = t.template cast<Accum>();
    z.array() -= z.maxCoeff();
    z = z.array().exp().matrix();
    z /= z.sum();
    Matrix<Scalar> out = z.template cast<Scalar>();
    return out;
}

/// Index of the largest element of a 1×n row; ties go to the lowest index.
template <typename Derived>
std::size_t argmax(const Eigen::MatrixBase<Derived>& t) {
    if (t.rows() != 1 || t.cols() < 1) {
        throw DimensionError("argmax expects a 1xn row, got " + shape_string(t));
    }
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < t.cols(); ++i) {
        if (t(0, i) > t(0, static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
    }
    return best;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& t) {
    return t.allFinite();
}

}  // namespace nncov
