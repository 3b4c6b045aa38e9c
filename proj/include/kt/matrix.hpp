#pragma once

#include "kt/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kt {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(rows_, cols_));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& row : rows) {
            if (row.size() != cols_) {
                throw DimensionError("ragged matrix literal");
            }
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    static Matrix scalar(double v) { return Matrix(1, 1, v); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    /// Value of a 1x1 matrix.
    double item() const {
        if (size() != 1) {
            throw DimensionError("item() on " + shape() + " matrix");
        }
        return data_[0];
    }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape() const { return shape_string(rows_, cols_); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(*this, o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += o.data_[i];
        }
        return *this;
    }

    bool operator==(const Matrix& o) const = default;

    static std::string shape_string(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

    static void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
        if (!a.same_shape(b)) {
            throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
        }
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline Eigen::Map<RowMajor> view(Matrix& m) {
    return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

} // namespace detail

/// out (+)= a * b
inline void gemm_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
    detail::view(out).noalias() += detail::view(a) * detail::view(b);
}

/// out (+)= a * b^T
inline void gemm_nt_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
    detail::view(out).noalias() += detail::view(a) * detail::view(b).transpose();
}

/// out (+)= a^T * b
inline void gemm_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
    detail::view(out).noalias() += detail::view(a).transpose() * detail::view(b);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: shape mismatch " + a.shape() + " x " + b.shape());
    }
    Matrix out(a.rows(), b.cols());
    gemm_accumulate(a, b, out);
    return out;
}

/// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: shape mismatch " + a.shape() + " x " + b.shape() + "^T");
    }
    Matrix out(a.rows(), b.rows());
    gemm_nt_accumulate(a, b, out);
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out(c, r) = a(r, c);
        }
    }
    return out;
}

/// Logistic function, branching on sign so exp never overflows.
inline double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

enum class Elementwise { tanh, sigmoid, add, mul };

inline Matrix elementwise(Elementwise op, const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    switch (op) {
    case Elementwise::tanh:
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
        break;
    case Elementwise::sigmoid:
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = sigmoid(a[i]);
        break;
    default:
        throw ContractError("elementwise: binary op given one operand");
    }
    return out;
}

inline Matrix elementwise(Elementwise op, const Matrix& a, const Matrix& b) {
    Matrix::require_same_shape(a, b, "elementwise");
    Matrix out(a.rows(), a.cols());
    switch (op) {
    case Elementwise::add:
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
        break;
    case Elementwise::mul:
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
        break;
    default:
        throw ContractError("elementwise: unary op given two operands");
    }
    return out;
}

/// Stable softmax of a contiguous or strided run of values, written to out.
inline void softmax_inplace(const double* in, double* out, std::size_t n, std::size_t stride = 1) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) hi = std::max(hi, in[i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i * stride] = std::exp(in[i * stride] - hi);
        total += out[i * stride];
    }
    for (std::size_t i = 0; i < n; ++i) out[i * stride] /= total;
}

enum class Axis { rows, cols };

/// Axis::rows normalizes each row; Axis::cols normalizes each column.
inline Matrix softmax(const Matrix& x, Axis axis = Axis::rows) {
    Matrix out(x.rows(), x.cols());
    if (axis == Axis::rows) {
        if (x.cols() == 0) throw ContractError("softmax over empty rows");
        for (std::size_t r = 0; r < x.rows(); ++r) {
            softmax_inplace(x.data() + r * x.cols(), out.data() + r * x.cols(), x.cols());
        }
    } else {
        if (x.rows() == 0) throw ContractError("softmax over empty columns");
        for (std::size_t c = 0; c < x.cols(); ++c) {
            softmax_inplace(x.data() + c, out.data() + c, x.rows(), x.cols());
        }
    }
    return out;
}

inline bool all_finite(const Matrix& m) noexcept {
    return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    Matrix::require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

} // namespace kt
