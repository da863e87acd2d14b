#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "moecarve/matrix.hpp"
#include "moecarve/profile.hpp"

namespace testsupport {

// Straightforward i-j-k triple loop, independent of the library kernel's
// loop order. Accumulates in 64-bit like the kernel promises to.
inline moecarve::Matrix naive_matmul(const moecarve::Matrix& a, const moecarve::Matrix& b) {
    moecarve::Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += static_cast<double>(a(i, k)) * static_cast<double>(b(k, j));
            }
            out(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

// One dense hidden value h_i = swish(x . gate_i) * (x . up_i), evaluated
// per neuron without any matrix machinery.
inline double dense_hidden_term(const moecarve::DenseFfn& ffn, std::span<const float> x,
                                std::size_t i) {
    double gate = 0.0;
    double up = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        gate += static_cast<double>(x[k]) * static_cast<double>(ffn.w_gate(k, i));
        up += static_cast<double>(x[k]) * static_cast<double>(ffn.w_up(k, i));
    }
    const float g = static_cast<float>(gate);
    const float u = static_cast<float>(up);
    return static_cast<double>(moecarve::swish(g)) * static_cast<double>(u);
}

// Sum of the per-neuron output terms h_i * w_down_i over the given neurons:
// the term decomposition of the dense FFN output.
inline std::vector<double> dense_term_sum(const moecarve::DenseFfn& ffn,
                                          std::span<const float> x,
                                          std::span<const std::size_t> neurons) {
    std::vector<double> out(ffn.embed_dim(), 0.0);
    for (std::size_t i : neurons) {
        const double h = dense_hidden_term(ffn, x, i);
        for (std::size_t t = 0; t < out.size(); ++t) {
            out[t] += h * static_cast<double>(ffn.w_down(i, t));
        }
    }
    return out;
}

// All k-element subsets of {0..n-1}, lexicographic.
inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::size_t>> result;
    std::vector<std::size_t> current;
    const auto recurse = [&](auto&& self, std::size_t start) -> void {
        if (current.size() == k) {
            result.push_back(current);
            return;
        }
        for (std::size_t i = start; i < n; ++i) {
            current.push_back(i);
            self(self, i + 1);
            current.pop_back();
        }
    };
    recurse(recurse, 0);
    return result;
}

inline double l2_norm(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) {
        sq += static_cast<double>(x) * static_cast<double>(x);
    }
    return std::sqrt(sq);
}

inline double l2_diff(std::span<const float> a, std::span<const float> b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sq += d * d;
    }
    return std::sqrt(sq);
}

} // namespace testsupport
