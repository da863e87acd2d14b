#include "moecarve/profile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace moecarve {

namespace {

Matrix normalize_rows(const Matrix& m, const char* what) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double sq = 0.0;
        for (float v : m.row(i)) {
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
        if (sq == 0.0) {
            throw std::invalid_argument(std::string(what) + " row " + std::to_string(i) +
                                        " has zero norm, cannot normalize");
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (float& v : out.row(i)) {
            v = static_cast<float>(v * inv);
        }
    }
    return out;
}

Matrix normalize_cols(const Matrix& m, const char* what) {
    Matrix out = m;
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double sq = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            sq += static_cast<double>(m(i, j)) * static_cast<double>(m(i, j));
        }
        if (sq == 0.0) {
            throw std::invalid_argument(std::string(what) + " column " + std::to_string(j) +
                                        " has zero norm, cannot normalize");
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            out(i, j) = static_cast<float>(out(i, j) * inv);
        }
    }
    return out;
}

} // namespace

void DenseFfn::check() const {
    if (w_up.rows() != w_gate.rows() || w_up.cols() != w_gate.cols()) {
        throw std::invalid_argument("w_up " + w_up.shape_str() + " and w_gate " +
                                    w_gate.shape_str() + " must have equal shapes");
    }
    if (w_down.rows() != w_up.cols() || w_down.cols() != w_up.rows()) {
        throw std::invalid_argument("w_down " + w_down.shape_str() +
                                    " must be the transpose shape of w_up " + w_up.shape_str());
    }
}

Matrix hidden_states(const CalibrationBatch& batch, const DenseFfn& ffn, bool normalize) {
    ffn.check();
    if (batch.tokens.cols() != ffn.embed_dim()) {
        throw std::invalid_argument("token width " + batch.tokens.shape_str() +
                                    " does not match FFN embed dim " +
                                    std::to_string(ffn.embed_dim()));
    }
    if (!normalize) {
        return hadamard(swish(matmul(batch.tokens, ffn.w_gate)), matmul(batch.tokens, ffn.w_up));
    }
    const Matrix x = normalize_rows(batch.tokens, "token");
    const Matrix gate = normalize_cols(ffn.w_gate, "w_gate");
    const Matrix up = normalize_cols(ffn.w_up, "w_up");
    return hadamard(swish(matmul(x, gate)), matmul(x, up));
}

std::vector<std::uint8_t> atopk_markers(std::span<const float> h_row, std::size_t k_a) {
    if (k_a < 1 || k_a > h_row.size()) {
        throw std::invalid_argument("k_a = " + std::to_string(k_a) + " out of range [1," +
                                    std::to_string(h_row.size()) + "]");
    }
    std::vector<std::size_t> order(h_row.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_a),
                      order.end(), [&](std::size_t a, std::size_t b) {
                          const float fa = std::fabs(h_row[a]);
                          const float fb = std::fabs(h_row[b]);
                          if (fa != fb) return fa > fb;
                          return a < b;
                      });
    std::vector<std::uint8_t> marks(h_row.size(), 0);
    for (std::size_t i = 0; i < k_a; ++i) {
        marks[order[i]] = 1;
    }
    return marks;
}

std::vector<double> activation_rates(const Matrix& markers) {
    std::vector<double> rates(markers.cols(), 0.0);
    for (std::size_t i = 0; i < markers.rows(); ++i) {
        for (std::size_t j = 0; j < markers.cols(); ++j) {
            rates[j] += markers(i, j);
        }
    }
    const double q = static_cast<double>(markers.rows());
    for (double& r : rates) {
        r /= q;
    }
    return rates;
}

ActivationProfile build_profile(const CalibrationBatch& batch, const DenseFfn& ffn,
                                std::size_t k_a, bool normalize) {
    const Matrix h = hidden_states(batch, ffn, normalize);
    ActivationProfile profile;
    profile.markers = Matrix(h.rows(), h.cols());
    profile.k_a = k_a;
    profile.tokens = h.rows();
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const std::vector<std::uint8_t> marks = atopk_markers(h.row(i), k_a);
        for (std::size_t j = 0; j < h.cols(); ++j) {
            profile.markers(i, j) = static_cast<float>(marks[j]);
        }
    }
    profile.rates = activation_rates(profile.markers);
    return profile;
}

} // namespace moecarve
