#include "moecarve/grouping.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace moecarve {

namespace {

// Sort indices by activation rate, highest first, lower index on ties.
std::vector<std::size_t> by_rate_desc(const std::vector<double>& rates,
                                      const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> order = indices;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rates[a] != rates[b]) return rates[a] > rates[b];
        return a < b;
    });
    return order;
}

std::vector<bool> index_mask(std::span<const std::size_t> indices, std::size_t limit,
                             const char* what) {
    std::vector<bool> mask(limit, false);
    for (std::size_t idx : indices) {
        if (idx >= limit) {
            throw std::out_of_range(std::string(what) + " index " + std::to_string(idx) +
                                    " out of range [0," + std::to_string(limit) + ")");
        }
        if (mask[idx]) {
            throw std::invalid_argument(std::string(what) + " index " + std::to_string(idx) +
                                        " listed twice");
        }
        mask[idx] = true;
    }
    return mask;
}

double column_distance(const Matrix& markers, std::size_t neuron, const Centroid& centroid) {
    double sq = 0.0;
    for (std::size_t t = 0; t < markers.rows(); ++t) {
        const double diff = static_cast<double>(markers(t, neuron)) - centroid[t];
        sq += diff * diff;
    }
    return std::sqrt(sq);
}

} // namespace

void MoeConfig::check(std::size_t hidden_dim) const {
    if (n_experts == 0 || n_routed == 0) {
        throw std::invalid_argument("need at least one expert and one routed expert");
    }
    if (n_shared + n_routed != n_experts) {
        throw std::invalid_argument("n_shared + n_routed = " +
                                    std::to_string(n_shared + n_routed) +
                                    " must equal n_experts = " + std::to_string(n_experts));
    }
    if (expert_size == 0 || n_experts * expert_size != hidden_dim) {
        throw std::invalid_argument("n_experts * expert_size = " +
                                    std::to_string(n_experts * expert_size) +
                                    " must equal hidden dim " + std::to_string(hidden_dim));
    }
    if (n_active < 1 || n_active > n_routed) {
        throw std::invalid_argument("n_active = " + std::to_string(n_active) +
                                    " out of range [1," + std::to_string(n_routed) + "]");
    }
    if (k_a < 1 || k_a > hidden_dim) {
        throw std::invalid_argument("k_a = " + std::to_string(k_a) + " out of range [1," +
                                    std::to_string(hidden_dim) + "]");
    }
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("gamma must be positive");
    }
    if (max_kmeans_iters == 0) {
        throw std::invalid_argument("max_kmeans_iters must be at least 1");
    }
}

std::vector<std::size_t> select_shared(const ActivationProfile& profile, std::size_t n_shared,
                                       std::size_t expert_size) {
    const std::size_t want = n_shared * expert_size;
    const std::size_t d_h = profile.markers.cols();
    if (want > d_h) {
        throw std::invalid_argument("shared block of " + std::to_string(want) +
                                    " neurons exceeds hidden dim " + std::to_string(d_h));
    }
    std::vector<std::size_t> all(d_h);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> order = by_rate_desc(profile.rates, all);
    std::vector<std::size_t> shared(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));
    std::sort(shared.begin(), shared.end());
    return shared;
}

CentroidInit init_centroids(const ActivationProfile& profile,
                            std::span<const std::size_t> shared, std::size_t n_routed) {
    const std::size_t d_h = profile.markers.cols();
    const std::vector<bool> is_shared = index_mask(shared, d_h, "shared");
    std::vector<std::size_t> remaining;
    remaining.reserve(d_h - shared.size());
    for (std::size_t i = 0; i < d_h; ++i) {
        if (!is_shared[i]) remaining.push_back(i);
    }
    if (remaining.size() < n_routed) {
        throw std::invalid_argument("only " + std::to_string(remaining.size()) +
                                    " non-shared neurons for " + std::to_string(n_routed) +
                                    " centroids");
    }
    const std::vector<std::size_t> order = by_rate_desc(profile.rates, remaining);

    CentroidInit init;
    init.sources.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_routed));
    init.centroids.reserve(n_routed);
    for (std::size_t src : init.sources) {
        Centroid c(profile.markers.rows());
        for (std::size_t t = 0; t < profile.markers.rows(); ++t) {
            c[t] = profile.markers(t, src);
        }
        init.centroids.push_back(std::move(c));
    }
    return init;
}

std::vector<std::vector<float>> marker_columns(const Matrix& markers,
                                               std::span<const std::size_t> neurons) {
    index_mask(neurons, markers.cols(), "neuron");
    std::vector<std::vector<float>> columns;
    columns.reserve(neurons.size());
    for (std::size_t idx : neurons) {
        std::vector<float> col(markers.rows());
        for (std::size_t t = 0; t < markers.rows(); ++t) {
            col[t] = markers(t, idx);
        }
        columns.push_back(std::move(col));
    }
    return columns;
}

DistanceMatrix distance_matrix(const std::vector<std::vector<float>>& features,
                               const std::vector<Centroid>& centroids) {
    DistanceMatrix d;
    d.rows = features.size();
    d.cols = centroids.size();
    d.data.resize(d.rows * d.cols);
    for (std::size_t i = 0; i < d.rows; ++i) {
        for (std::size_t j = 0; j < d.cols; ++j) {
            if (features[i].size() != centroids[j].size()) {
                throw std::invalid_argument("feature length " +
                                            std::to_string(features[i].size()) +
                                            " does not match centroid length " +
                                            std::to_string(centroids[j].size()));
            }
            double sq = 0.0;
            for (std::size_t t = 0; t < features[i].size(); ++t) {
                const double diff = static_cast<double>(features[i][t]) - centroids[j][t];
                sq += diff * diff;
            }
            d.data[i * d.cols + j] = std::sqrt(sq);
        }
    }
    return d;
}

CostMatrix extend_distance_matrix(const DistanceMatrix& d, std::size_t expert_size) {
    if (expert_size == 0 || d.rows != d.cols * expert_size) {
        throw std::invalid_argument("cannot extend " + std::to_string(d.rows) + "x" +
                                    std::to_string(d.cols) + " distances with expert size " +
                                    std::to_string(expert_size));
    }
    std::vector<double> cost(d.rows * d.rows);
    for (std::size_t i = 0; i < d.rows; ++i) {
        for (std::size_t p = 0; p < d.rows; ++p) {
            cost[i * d.rows + p] = d.at(i, p / expert_size);
        }
    }
    return CostMatrix(d.rows, std::move(cost));
}

KmeansResult balanced_kmeans(const ActivationProfile& profile,
                             std::span<const std::size_t> shared, const MoeConfig& config,
                             const KmeansObserver& observer) {
    const std::size_t d_h = profile.markers.cols();
    const std::size_t q = profile.markers.rows();
    config.check(d_h);
    if (shared.size() != config.n_shared * config.expert_size) {
        throw std::invalid_argument("shared set has " + std::to_string(shared.size()) +
                                    " neurons, expected " +
                                    std::to_string(config.n_shared * config.expert_size));
    }
    const std::vector<bool> is_shared = index_mask(shared, d_h, "shared");
    std::vector<std::size_t> candidates;
    candidates.reserve(d_h - shared.size());
    for (std::size_t i = 0; i < d_h; ++i) {
        if (!is_shared[i]) candidates.push_back(i);
    }
    const std::vector<std::vector<float>> features = marker_columns(profile.markers, candidates);

    KmeansResult result;
    result.centroids = init_centroids(profile, shared, config.n_routed).centroids;

    for (std::size_t iter = 0; iter < config.max_kmeans_iters; ++iter) {
        const DistanceMatrix d = distance_matrix(features, result.centroids);
        const CostMatrix ext = extend_distance_matrix(d, config.expert_size);
        const Assignment asg = solve_lap(ext);

        std::vector<std::vector<std::size_t>> clusters(config.n_routed);
        for (auto& cluster : clusters) {
            cluster.reserve(config.expert_size);
        }
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            clusters[asg.perm[i] / config.expert_size].push_back(candidates[i]);
        }
        result.clusters = std::move(clusters);
        result.objective_log.push_back(
            kmeans_objective(profile.markers, result.clusters, result.centroids));
        if (observer) {
            observer(iter, result.clusters, result.centroids);
        }

        double moved = 0.0;
        std::vector<Centroid> updated(config.n_routed);
        for (std::size_t p = 0; p < config.n_routed; ++p) {
            const auto& members = result.clusters[p];
            if (members.empty()) {
                // Unreachable: the assignment gives every cluster exactly
                // expert_size members.
                assert(false && "balanced assignment produced an empty cluster");
                updated[p] = result.centroids[p];
                continue;
            }
            Centroid mean(q, 0.0);
            for (std::size_t idx : members) {
                for (std::size_t t = 0; t < q; ++t) {
                    mean[t] += profile.markers(t, idx);
                }
            }
            for (double& v : mean) {
                v /= static_cast<double>(members.size());
            }
            for (std::size_t t = 0; t < q; ++t) {
                moved = std::max(moved, std::fabs(mean[t] - result.centroids[p][t]));
            }
            updated[p] = std::move(mean);
        }
        result.centroids = std::move(updated);
        result.iterations = iter + 1;
        if (moved <= 1e-9) {
            result.converged = true;
            break;
        }
    }
    return result;
}

double kmeans_objective(const Matrix& markers,
                        const std::vector<std::vector<std::size_t>>& clusters,
                        const std::vector<Centroid>& centroids) {
    if (clusters.size() != centroids.size()) {
        throw std::invalid_argument("got " + std::to_string(clusters.size()) + " clusters but " +
                                    std::to_string(centroids.size()) + " centroids");
    }
    double total = 0.0;
    for (std::size_t p = 0; p < clusters.size(); ++p) {
        for (std::size_t idx : clusters[p]) {
            total += column_distance(markers, idx, centroids[p]);
        }
    }
    return total;
}

std::vector<std::size_t> pick_representatives(const Matrix& markers,
                                              const std::vector<std::vector<std::size_t>>& clusters,
                                              const std::vector<Centroid>& centroids) {
    if (clusters.size() != centroids.size()) {
        throw std::invalid_argument("got " + std::to_string(clusters.size()) + " clusters but " +
                                    std::to_string(centroids.size()) + " centroids");
    }
    std::vector<std::size_t> reps;
    reps.reserve(clusters.size());
    for (std::size_t p = 0; p < clusters.size(); ++p) {
        if (clusters[p].empty()) {
            throw std::invalid_argument("cluster " + std::to_string(p) + " is empty");
        }
        std::size_t best = clusters[p][0];
        double best_dist = column_distance(markers, best, centroids[p]);
        for (std::size_t k = 1; k < clusters[p].size(); ++k) {
            const std::size_t idx = clusters[p][k];
            const double dist = column_distance(markers, idx, centroids[p]);
            if (dist < best_dist || (dist == best_dist && idx < best)) {
                best = idx;
                best_dist = dist;
            }
        }
        reps.push_back(best);
    }
    return reps;
}

} // namespace moecarve
