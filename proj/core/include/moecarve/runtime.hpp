#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moecarve/carve.hpp"
#include "moecarve/profile.hpp"

namespace moecarve {

// How gate scores for active experts are formed. binary gates are exactly 1,
// scaled gates are 1 + s'_i * u_i, generic gates pass the raw affinity s_i
// through (a comparison baseline, not used by the carving pipeline).
enum class GateMode { binary, scaled, generic };

GateMode parse_gate_mode(const std::string& name);
std::string gate_mode_name(GateMode mode);

// One routing decision. active holds the n_active selected expert indices in
// ascending order; gate[i] is 0 for every inactive expert. Gates are kept in
// 64-bit so their derivatives can be checked against finite differences.
struct GateDecision {
    std::vector<float> affinity;
    std::vector<float> probs;
    std::vector<std::size_t> active;
    std::vector<double> gate;
    GateMode mode = GateMode::binary;
};

// Counts expert evaluations so the laziness contract (one shared block plus
// exactly n_active routed experts per token) can be asserted.
struct EvalCounter {
    std::size_t shared = 0;
    std::size_t routed = 0;
};

// Per-expert activation counts over a token stream.
struct LoadStats {
    std::vector<std::size_t> counts;
    std::size_t tokens = 0;

    explicit LoadStats(std::size_t n_experts = 0) : counts(n_experts, 0) {}
    void accumulate(const GateDecision& decision);
};

// Dense SwiGLU forward for one token: (swish(x W_gate) ⊙ (x W_up)) W_down.
std::vector<float> dense_forward(const DenseFfn& ffn, std::span<const float> x);

// Per-expert affinities s: the router's SwiGLU hidden values. Column j of
// the router holds representative neuron R_j's weights, so s_j equals the
// dense hidden value h_{R_j} down to the last bit.
std::vector<float> router_affinity(const MoeFfn& moe, std::span<const float> x);

// Selection and gating given affinities: s' = softmax(s), the active set is
// the top n_active of s' + b (ties toward the lower index; b influences
// selection only), gates per mode.
GateDecision make_gate_decision(std::span<const float> affinity, std::span<const double> u,
                                std::span<const double> b, std::size_t n_active, GateMode mode);

// router_affinity + make_gate_decision with the MoeFfn's own u, b, n_active.
GateDecision route(const MoeFfn& moe, std::span<const float> x, GateMode mode);

// Output of one expert on one token.
std::vector<float> expert_forward(const ExpertWeights& e, std::span<const float> x);

// MoE forward pass: shared block always runs, routed experts run only when
// active (inactive experts are never evaluated). counter, when given, tallies
// the evaluations.
std::vector<float> moe_forward(const MoeFfn& moe, std::span<const float> x, GateMode mode,
                               EvalCounter* counter = nullptr);

// Derivatives of the scaled gates with respect to the scale vector u, holding
// the active set and s' fixed: diagonal, ∂g_i/∂u_i = s'_i for active i.
Matrix gate_jacobian(const GateDecision& decision);

// One load-balance step: experts over the mean load lose gamma of selection
// bias, experts under it gain gamma. The mean load is sum(counts)/n_experts,
// which equals tokens*n_active/n_experts for any decision stream.
std::vector<double> update_balance_bias(std::span<const double> b, const LoadStats& stats,
                                        double gamma);

// Router quality against the ground truth the router approximates: per token
// the "oracle" ranks routed experts by the L1 mass of their dense hidden
// values. Reports the mean router/oracle top-n_active overlap, a seeded
// random-selection baseline, the mean deactivated L1 mass under each policy,
// and the fraction of tokens where the router's deactivated mass is no worse
// than random's.
struct FidelityReport {
    double mean_overlap = 0.0;
    double random_overlap = 0.0;
    double router_deactivated_mass = 0.0;
    double oracle_deactivated_mass = 0.0;
    double random_deactivated_mass = 0.0;
    double router_not_worse_fraction = 0.0;
    std::size_t tokens = 0;
};

FidelityReport routing_fidelity(const MoeFfn& moe, const DenseFfn& ffn,
                                const CalibrationBatch& batch, std::uint64_t seed);

// Per-token FLOP model: a d×w projection costs 2*d*w multiply-adds, a SwiGLU
// block of width w therefore 6*d*w. ffn_ratio compares expert projections
// against the dense FFN; total_ratio folds the router's two projections in.
struct FlopReport {
    std::size_t dense_per_token = 0;
    std::size_t moe_ffn_per_token = 0;
    std::size_t router_per_token = 0;
    double ffn_ratio = 0.0;
    double total_ratio = 0.0;
};

FlopReport flop_report(const MoeFfn& moe);

} // namespace moecarve
