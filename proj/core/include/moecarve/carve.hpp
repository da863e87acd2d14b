#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "moecarve/grouping.hpp"
#include "moecarve/matrix.hpp"
#include "moecarve/profile.hpp"

namespace moecarve {

// Weight slice of one expert: columns `source_indices` of the dense up and
// gate projections, the matching rows of the down projection. The copies are
// bit-identical to the dense weights.
struct ExpertWeights {
    Matrix w_up;
    Matrix w_gate;
    Matrix w_down;
    std::vector<std::size_t> source_indices;

    std::size_t width() const { return source_indices.size(); }
};

// The analytical router: per routed expert, the gate/up columns of that
// expert's representative neuron. Running SwiGLU over these columns scores
// expert j with exactly the dense hidden value of neuron source_indices[j].
struct RouterWeights {
    Matrix w_gate;
    Matrix w_up;
    std::vector<std::size_t> source_indices;
};

// A carved mixture-of-experts FFN. The shared block is always evaluated;
// n_active of the routed experts run per token. u scales active gates, b
// biases expert selection; both start at zero so a fresh carve is an exact
// re-arrangement of the dense computation.
struct MoeFfn {
    ExpertWeights shared;
    std::vector<ExpertWeights> routed;
    RouterWeights router;
    std::vector<double> u;
    std::vector<double> b;
    std::size_t n_active = 1;

    std::size_t embed_dim() const { return router.w_gate.rows(); }
    std::size_t n_routed() const { return routed.size(); }

    // Throws if shapes, index coverage, or vector lengths are inconsistent.
    void check() const;
};

// Copies the given neurons out of the dense FFN. Indices must be distinct
// and in range; they are kept in the order given.
ExpertWeights slice_expert(const DenseFfn& ffn, std::span<const std::size_t> indices);

// Collects the representative neurons' gate/up columns into router weights.
RouterWeights build_router(const DenseFfn& ffn, std::span<const std::size_t> representatives);

struct CarveResult {
    MoeFfn moe;
    Partition partition;
    std::vector<double> objective_log;
    bool kmeans_converged = false;
    std::size_t kmeans_iterations = 0;
};

// Full conversion pipeline: pick the shared block by activation rate, group
// the rest with balanced k-means, choose representatives, slice all expert
// weights and assemble the router. u and b come out all-zero.
CarveResult carve_moe(const DenseFfn& ffn, const ActivationProfile& profile,
                      const MoeConfig& config);

} // namespace moecarve
