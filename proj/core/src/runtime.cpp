#include "moecarve/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace moecarve {

namespace {

Matrix as_row(std::span<const float> x) {
    return Matrix(1, x.size(), std::vector<float>(x.begin(), x.end()));
}

// SwiGLU hidden values of one token against a (gate, up) column pair.
std::vector<float> swiglu_hidden(std::span<const float> x, const Matrix& w_gate,
                                 const Matrix& w_up) {
    if (x.size() != w_gate.rows()) {
        throw std::invalid_argument("token width " + std::to_string(x.size()) +
                                    " does not match projection rows " +
                                    std::to_string(w_gate.rows()));
    }
    const Matrix row = as_row(x);
    const Matrix h = hadamard(swish(matmul(row, w_gate)), matmul(row, w_up));
    return {h.row(0).begin(), h.row(0).end()};
}

std::vector<float> down_project(const std::vector<float>& hidden, const Matrix& w_down) {
    const Matrix out = matmul(Matrix(1, hidden.size(), hidden), w_down);
    return {out.row(0).begin(), out.row(0).end()};
}

std::vector<std::size_t> top_indices(std::span<const double> score, std::size_t k) {
    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (score[a] != score[b]) return score[a] > score[b];
                          return a < b;
                      });
    std::vector<std::size_t> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(top.begin(), top.end());
    return top;
}

} // namespace

GateMode parse_gate_mode(const std::string& name) {
    if (name == "binary") return GateMode::binary;
    if (name == "scaled") return GateMode::scaled;
    if (name == "generic") return GateMode::generic;
    throw std::invalid_argument("unknown gate mode '" + name +
                                "', expected binary, scaled or generic");
}

std::string gate_mode_name(GateMode mode) {
    switch (mode) {
        case GateMode::binary: return "binary";
        case GateMode::scaled: return "scaled";
        case GateMode::generic: return "generic";
    }
    throw std::invalid_argument("unknown gate mode value");
}

void LoadStats::accumulate(const GateDecision& decision) {
    if (counts.empty()) {
        counts.assign(decision.gate.size(), 0);
    }
    if (counts.size() != decision.gate.size()) {
        throw std::invalid_argument("decision covers " + std::to_string(decision.gate.size()) +
                                    " experts, stats track " + std::to_string(counts.size()));
    }
    for (std::size_t i : decision.active) {
        ++counts[i];
    }
    ++tokens;
}

std::vector<float> dense_forward(const DenseFfn& ffn, std::span<const float> x) {
    return down_project(swiglu_hidden(x, ffn.w_gate, ffn.w_up), ffn.w_down);
}

std::vector<float> router_affinity(const MoeFfn& moe, std::span<const float> x) {
    return swiglu_hidden(x, moe.router.w_gate, moe.router.w_up);
}

GateDecision make_gate_decision(std::span<const float> affinity, std::span<const double> u,
                                std::span<const double> b, std::size_t n_active, GateMode mode) {
    const std::size_t n_r = affinity.size();
    if (u.size() != n_r || b.size() != n_r) {
        throw std::invalid_argument("u/b lengths " + std::to_string(u.size()) + "/" +
                                    std::to_string(b.size()) + " do not match " +
                                    std::to_string(n_r) + " affinities");
    }
    if (n_active < 1 || n_active > n_r) {
        throw std::invalid_argument("n_active = " + std::to_string(n_active) +
                                    " out of range [1," + std::to_string(n_r) + "]");
    }

    GateDecision decision;
    decision.mode = mode;
    decision.affinity.assign(affinity.begin(), affinity.end());
    decision.probs = softmax(affinity);

    // b shifts the selection scores but never appears in the gates.
    std::vector<double> selection(n_r);
    for (std::size_t i = 0; i < n_r; ++i) {
        selection[i] = static_cast<double>(decision.probs[i]) + b[i];
    }
    decision.active = top_indices(selection, n_active);

    decision.gate.assign(n_r, 0.0);
    for (std::size_t i : decision.active) {
        switch (mode) {
            case GateMode::binary:
                decision.gate[i] = 1.0;
                break;
            case GateMode::scaled:
                decision.gate[i] = 1.0 + static_cast<double>(decision.probs[i]) * u[i];
                break;
            case GateMode::generic:
                decision.gate[i] = static_cast<double>(decision.affinity[i]);
                break;
        }
    }
    return decision;
}

GateDecision route(const MoeFfn& moe, std::span<const float> x, GateMode mode) {
    const std::vector<float> s = router_affinity(moe, x);
    return make_gate_decision(s, moe.u, moe.b, moe.n_active, mode);
}

std::vector<float> expert_forward(const ExpertWeights& e, std::span<const float> x) {
    return down_project(swiglu_hidden(x, e.w_gate, e.w_up), e.w_down);
}

std::vector<float> moe_forward(const MoeFfn& moe, std::span<const float> x, GateMode mode,
                               EvalCounter* counter) {
    const GateDecision decision = route(moe, x, mode);

    const std::vector<float> shared_out = expert_forward(moe.shared, x);
    if (counter) {
        ++counter->shared;
    }
    std::vector<double> acc(shared_out.begin(), shared_out.end());
    for (std::size_t i : decision.active) {
        const std::vector<float> out = expert_forward(moe.routed[i], x);
        if (counter) {
            ++counter->routed;
        }
        const double g = decision.gate[i];
        for (std::size_t t = 0; t < acc.size(); ++t) {
            acc[t] += g * static_cast<double>(out[t]);
        }
    }
    std::vector<float> result(acc.size());
    for (std::size_t t = 0; t < acc.size(); ++t) {
        result[t] = static_cast<float>(acc[t]);
    }
    return result;
}

Matrix gate_jacobian(const GateDecision& decision) {
    if (decision.mode != GateMode::scaled) {
        throw std::invalid_argument("gate_jacobian requires a scaled-mode decision, got " +
                                    gate_mode_name(decision.mode));
    }
    const std::size_t n_r = decision.gate.size();
    Matrix jac(n_r, n_r);
    for (std::size_t i : decision.active) {
        jac(i, i) = decision.probs[i];
    }
    return jac;
}

std::vector<double> update_balance_bias(std::span<const double> b, const LoadStats& stats,
                                        double gamma) {
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("gamma must be positive");
    }
    if (b.size() != stats.counts.size()) {
        throw std::invalid_argument("bias length " + std::to_string(b.size()) +
                                    " does not match " + std::to_string(stats.counts.size()) +
                                    " expert counts");
    }
    double total = 0.0;
    for (std::size_t c : stats.counts) {
        total += static_cast<double>(c);
    }
    const double expected = total / static_cast<double>(stats.counts.size());

    std::vector<double> updated(b.begin(), b.end());
    for (std::size_t i = 0; i < updated.size(); ++i) {
        const double load = static_cast<double>(stats.counts[i]);
        if (load > expected) {
            updated[i] -= gamma;
        } else if (load < expected) {
            updated[i] += gamma;
        }
    }
    return updated;
}

FlopReport flop_report(const MoeFfn& moe) {
    moe.check();
    const std::size_t d = moe.embed_dim();
    std::size_t hidden = moe.shared.width();
    for (const auto& e : moe.routed) {
        hidden += e.width();
    }
    const std::size_t expert_width = moe.routed.front().width();

    FlopReport report;
    report.dense_per_token = 6 * d * hidden;
    report.moe_ffn_per_token = 6 * d * (moe.shared.width() + moe.n_active * expert_width);
    report.router_per_token = 4 * d * moe.n_routed();
    report.ffn_ratio = static_cast<double>(report.moe_ffn_per_token) /
                       static_cast<double>(report.dense_per_token);
    report.total_ratio =
        static_cast<double>(report.moe_ffn_per_token + report.router_per_token) /
        static_cast<double>(report.dense_per_token);
    return report;
}

FidelityReport routing_fidelity(const MoeFfn& moe, const DenseFfn& ffn,
                                const CalibrationBatch& batch, std::uint64_t seed) {
    moe.check();
    ffn.check();
    if (moe.embed_dim() != ffn.embed_dim()) {
        throw std::invalid_argument("MoE embed dim " + std::to_string(moe.embed_dim()) +
                                    " does not match dense embed dim " +
                                    std::to_string(ffn.embed_dim()));
    }
    const std::size_t n_r = moe.n_routed();
    const std::size_t n_k = moe.n_active;
    const Matrix h = hidden_states(batch, ffn, false);

    std::mt19937_64 rng(seed);
    // Draw k distinct expert indices by a partial shuffle; the tiny modulo
    // bias is irrelevant for a baseline.
    std::vector<std::size_t> pool(n_r);
    auto random_set = [&]() {
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t j = 0; j < n_k; ++j) {
            const std::size_t pick = j + static_cast<std::size_t>(rng() % (n_r - j));
            std::swap(pool[j], pool[pick]);
        }
        return std::vector<std::size_t>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_k));
    };

    FidelityReport report;
    report.tokens = batch.tokens.rows();
    std::size_t not_worse = 0;

    for (std::size_t row = 0; row < batch.tokens.rows(); ++row) {
        std::vector<double> mass(n_r, 0.0);
        double total_mass = 0.0;
        for (std::size_t p = 0; p < n_r; ++p) {
            for (std::size_t idx : moe.routed[p].source_indices) {
                mass[p] += std::fabs(static_cast<double>(h(row, idx)));
            }
            total_mass += mass[p];
        }
        const std::vector<std::size_t> oracle = top_indices(mass, n_k);
        const std::vector<std::size_t> routed = route(moe, batch.tokens.row(row), GateMode::binary).active;
        const std::vector<std::size_t> random = random_set();

        std::vector<bool> in_oracle(n_r, false);
        for (std::size_t p : oracle) in_oracle[p] = true;

        auto selected_mass = [&](const std::vector<std::size_t>& set) {
            double m = 0.0;
            for (std::size_t p : set) m += mass[p];
            return m;
        };
        auto overlap = [&](const std::vector<std::size_t>& set) {
            std::size_t hits = 0;
            for (std::size_t p : set) {
                if (in_oracle[p]) ++hits;
            }
            return static_cast<double>(hits) / static_cast<double>(n_k);
        };

        report.mean_overlap += overlap(routed);
        report.random_overlap += overlap(random);
        const double router_deact = total_mass - selected_mass(routed);
        const double random_deact = total_mass - selected_mass(random);
        report.router_deactivated_mass += router_deact;
        report.oracle_deactivated_mass += total_mass - selected_mass(oracle);
        report.random_deactivated_mass += random_deact;
        if (router_deact <= random_deact) {
            ++not_worse;
        }
    }

    const double q = static_cast<double>(report.tokens);
    report.mean_overlap /= q;
    report.random_overlap /= q;
    report.router_deactivated_mass /= q;
    report.oracle_deactivated_mass /= q;
    report.random_deactivated_mass /= q;
    report.router_not_worse_fraction = static_cast<double>(not_worse) / q;
    return report;
}

} // namespace moecarve
