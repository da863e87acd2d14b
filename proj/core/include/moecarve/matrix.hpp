#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace moecarve {

// Dense row-major matrix of 32-bit floats. This is deliberately minimal:
// no views, no broadcasting, no strides. Every kernel below allocates its
// result and accumulates reductions in 64-bit before rounding to storage
// precision.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const float& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    std::string shape_str() const;

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// Matrix product a*b. Accumulates each output element in 64-bit over
// ascending inner index, so results are reproducible across call sites.
Matrix matmul(const Matrix& a, const Matrix& b);

// x * sigmoid(x), evaluated in 64-bit and rounded once to float.
float swish(float x);

// Elementwise swish.
Matrix swish(const Matrix& m);

// Elementwise product. Shapes must match exactly.
Matrix hadamard(const Matrix& a, const Matrix& b);

// New matrix whose j-th column is m's indices[j]-th column. Indices may be
// in any order but must be distinct and in range.
Matrix column_select(const Matrix& m, std::span<const std::size_t> indices);

// Row analogue of column_select.
Matrix row_select(const Matrix& m, std::span<const std::size_t> indices);

// Numerically stable softmax (max-subtracted, 64-bit internals).
std::vector<float> softmax(std::span<const float> v);

} // namespace moecarve
