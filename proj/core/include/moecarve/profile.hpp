#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "moecarve/matrix.hpp"

namespace moecarve {

// One SwiGLU feed-forward block: F(x) = (swish(x W_gate) ⊙ (x W_up)) W_down.
// w_up and w_gate are d×d_h, w_down is d_h×d.
struct DenseFfn {
    Matrix w_up;
    Matrix w_gate;
    Matrix w_down;

    std::size_t embed_dim() const { return w_up.rows(); }
    std::size_t hidden_dim() const { return w_up.cols(); }

    // Throws if the three shapes are not mutually consistent.
    void check() const;
};

// Pre-flattened token embeddings, one token per row (q×d). Flattening
// batch/sequence structure is the caller's job.
struct CalibrationBatch {
    Matrix tokens;
};

// Activation statistics gathered over a calibration batch. markers is the
// q×d_h binary matrix whose row j flags the k_a entries of largest absolute
// hidden value for token j; column i is neuron i's feature vector. rates[i]
// is the fraction of tokens on which neuron i is marked.
struct ActivationProfile {
    Matrix markers;
    std::vector<double> rates;
    std::size_t k_a = 0;
    std::size_t tokens = 0;
};

// Hidden states H = swish(X W_gate) ⊙ (X W_up), one row per token. With
// normalize set, each token row of X and each column of W_gate/W_up is
// scaled to unit L2 norm first; a zero-norm row or column is an error that
// names the offending index. Normalization is used only for profiling, the
// forward passes always run on raw weights.
Matrix hidden_states(const CalibrationBatch& batch, const DenseFfn& ffn, bool normalize);

// Binary marker vector with exactly k_a ones at the k_a largest |h_i|.
// Ties are broken toward the lower index.
std::vector<std::uint8_t> atopk_markers(std::span<const float> h_row, std::size_t k_a);

// Per-neuron activation rates: column means of a binary marker matrix,
// accumulated in 64-bit.
std::vector<double> activation_rates(const Matrix& markers);

// Runs hidden_states over the batch, stacks atopk_markers row by row and
// computes the activation rates. Deterministic for identical inputs.
ActivationProfile build_profile(const CalibrationBatch& batch, const DenseFfn& ffn,
                                std::size_t k_a, bool normalize);

} // namespace moecarve
