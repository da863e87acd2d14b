#include "moecarve/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moecarve {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str());
    }
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch: " + a.shape_str() + " times " +
                                    b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    std::vector<double> acc(b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a.row(i).data();
        // The k-then-j order is cache-friendly on row-major b while still
        // accumulating each output element over ascending k, the same term
        // order a naive per-element loop would use.
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            const float* brow = b.row(k).data();
            for (std::size_t j = 0; j < b.cols(); ++j) {
                acc[j] += aik * static_cast<double>(brow[j]);
            }
        }
        float* orow = out.row(i).data();
        for (std::size_t j = 0; j < b.cols(); ++j) {
            orow[j] = static_cast<float>(acc[j]);
        }
    }
    return out;
}

float swish(float x) {
    const double xd = x;
    return static_cast<float>(xd / (1.0 + std::exp(-xd)));
}

Matrix swish(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
        out.data()[i] = swish(m.data()[i]);
    }
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("hadamard shape mismatch: " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] * b.data()[i];
    }
    return out;
}

namespace {

void check_indices(std::span<const std::size_t> indices, std::size_t limit, const char* what) {
    std::vector<bool> seen(limit, false);
    for (std::size_t idx : indices) {
        if (idx >= limit) {
            throw std::out_of_range(std::string(what) + " index " + std::to_string(idx) +
                                    " out of range [0," + std::to_string(limit) + ")");
        }
        if (seen[idx]) {
            throw std::invalid_argument(std::string(what) + " index " + std::to_string(idx) +
                                        " selected twice");
        }
        seen[idx] = true;
    }
}

} // namespace

Matrix column_select(const Matrix& m, std::span<const std::size_t> indices) {
    check_indices(indices, m.cols(), "column");
    Matrix out(m.rows(), indices.size());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < indices.size(); ++j) {
            out(i, j) = m(i, indices[j]);
        }
    }
    return out;
}

Matrix row_select(const Matrix& m, std::span<const std::size_t> indices) {
    check_indices(indices, m.rows(), "row");
    Matrix out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::span<const float> src = m.row(indices[i]);
        std::span<float> dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

std::vector<float> softmax(std::span<const float> v) {
    if (v.empty()) {
        throw std::invalid_argument("softmax of empty vector");
    }
    double maxv = v[0];
    for (float x : v) {
        maxv = std::max(maxv, static_cast<double>(x));
    }
    std::vector<double> e(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        e[i] = std::exp(static_cast<double>(v[i]) - maxv);
        sum += e[i];
    }
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(e[i] / sum);
    }
    return out;
}

} // namespace moecarve
