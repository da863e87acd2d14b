#include "moecarve/carve.hpp"

#include <stdexcept>
#include <string>

namespace moecarve {

namespace {

void check_expert(const ExpertWeights& e, std::size_t d, const char* what) {
    const std::size_t k = e.source_indices.size();
    if (e.w_up.rows() != d || e.w_up.cols() != k || e.w_gate.rows() != d ||
        e.w_gate.cols() != k || e.w_down.rows() != k || e.w_down.cols() != d) {
        throw std::invalid_argument(std::string(what) + " expert shapes inconsistent: up " +
                                    e.w_up.shape_str() + ", gate " + e.w_gate.shape_str() +
                                    ", down " + e.w_down.shape_str() + " for width " +
                                    std::to_string(k));
    }
}

} // namespace

void MoeFfn::check() const {
    const std::size_t d = embed_dim();
    const std::size_t n_r = routed.size();
    if (n_r == 0) {
        throw std::invalid_argument("a MoE FFN needs at least one routed expert");
    }
    check_expert(shared, d, "shared");
    std::size_t hidden = shared.width();
    for (std::size_t p = 0; p < n_r; ++p) {
        check_expert(routed[p], d, "routed");
        if (routed[p].width() != routed[0].width()) {
            throw std::invalid_argument("routed experts must share one width, expert " +
                                        std::to_string(p) + " has " +
                                        std::to_string(routed[p].width()) + " vs " +
                                        std::to_string(routed[0].width()));
        }
        hidden += routed[p].width();
    }
    if (router.w_gate.rows() != d || router.w_gate.cols() != n_r ||
        router.w_up.rows() != d || router.w_up.cols() != n_r ||
        router.source_indices.size() != n_r) {
        throw std::invalid_argument("router shapes inconsistent: gate " +
                                    router.w_gate.shape_str() + ", up " +
                                    router.w_up.shape_str() + " for " + std::to_string(n_r) +
                                    " routed experts");
    }
    if (u.size() != n_r || b.size() != n_r) {
        throw std::invalid_argument("u/b lengths " + std::to_string(u.size()) + "/" +
                                    std::to_string(b.size()) + " do not match " +
                                    std::to_string(n_r) + " routed experts");
    }
    if (n_active < 1 || n_active > n_r) {
        throw std::invalid_argument("n_active = " + std::to_string(n_active) +
                                    " out of range [1," + std::to_string(n_r) + "]");
    }
    // Source indices across shared + routed must cover 0..d_h-1 exactly.
    std::vector<bool> seen(hidden, false);
    auto mark = [&](const std::vector<std::size_t>& indices) {
        for (std::size_t idx : indices) {
            if (idx >= hidden || seen[idx]) {
                throw std::invalid_argument(
                    "expert source indices do not partition the hidden dimension");
            }
            seen[idx] = true;
        }
    };
    mark(shared.source_indices);
    for (const auto& e : routed) {
        mark(e.source_indices);
    }
}

ExpertWeights slice_expert(const DenseFfn& ffn, std::span<const std::size_t> indices) {
    ffn.check();
    ExpertWeights e;
    e.w_up = column_select(ffn.w_up, indices);
    e.w_gate = column_select(ffn.w_gate, indices);
    e.w_down = row_select(ffn.w_down, indices);
    e.source_indices.assign(indices.begin(), indices.end());
    return e;
}

RouterWeights build_router(const DenseFfn& ffn, std::span<const std::size_t> representatives) {
    ffn.check();
    RouterWeights r;
    r.w_gate = column_select(ffn.w_gate, representatives);
    r.w_up = column_select(ffn.w_up, representatives);
    r.source_indices.assign(representatives.begin(), representatives.end());
    return r;
}

CarveResult carve_moe(const DenseFfn& ffn, const ActivationProfile& profile,
                      const MoeConfig& config) {
    ffn.check();
    const std::size_t d_h = ffn.hidden_dim();
    config.check(d_h);
    if (profile.markers.cols() != d_h) {
        throw std::invalid_argument("profile covers " + std::to_string(profile.markers.cols()) +
                                    " neurons but the FFN has " + std::to_string(d_h));
    }

    CarveResult result;
    result.partition.shared = select_shared(profile, config.n_shared, config.expert_size);

    KmeansResult kmeans = balanced_kmeans(profile, result.partition.shared, config);
    result.partition.clusters = std::move(kmeans.clusters);
    result.partition.centroids = std::move(kmeans.centroids);
    result.partition.representatives =
        pick_representatives(profile.markers, result.partition.clusters, result.partition.centroids);
    result.objective_log = std::move(kmeans.objective_log);
    result.kmeans_converged = kmeans.converged;
    result.kmeans_iterations = kmeans.iterations;

    MoeFfn& moe = result.moe;
    moe.shared = slice_expert(ffn, result.partition.shared);
    moe.routed.reserve(config.n_routed);
    for (const auto& cluster : result.partition.clusters) {
        moe.routed.push_back(slice_expert(ffn, cluster));
    }
    moe.router = build_router(ffn, result.partition.representatives);
    moe.u.assign(config.n_routed, 0.0);
    moe.b.assign(config.n_routed, 0.0);
    moe.n_active = config.n_active;
    moe.check();
    return result;
}

} // namespace moecarve
