#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "moecarve/assignment.hpp"
#include "moecarve/profile.hpp"

namespace moecarve {

// Conversion parameters. n_experts = n_shared + n_routed; expert_size is the
// neuron count per expert, so n_experts * expert_size must equal the FFN's
// hidden dimension.
struct MoeConfig {
    std::size_t n_experts = 8;
    std::size_t n_shared = 1;
    std::size_t n_routed = 7;
    std::size_t n_active = 1;
    std::size_t expert_size = 0;
    std::size_t k_a = 10;
    double gamma = 0.001;
    std::size_t max_kmeans_iters = 100;
    bool normalize = false;
    std::uint64_t seed = 0;

    // Throws if the fields are inconsistent with each other or with the
    // hidden dimension they are meant to partition.
    void check(std::size_t hidden_dim) const;
};

// A centroid lives in token space: one coordinate per calibration token,
// fractional after mean updates even though the features are binary.
using Centroid = std::vector<double>;

// Neuron partition produced by carving: the always-on shared block, n_routed
// clusters of exactly expert_size neurons, the final centroids, and each
// cluster's representative neuron. Index lists are ascending.
struct Partition {
    std::vector<std::size_t> shared;
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<Centroid> centroids;
    std::vector<std::size_t> representatives;
};

// Indices of the n_shared*expert_size neurons with the highest activation
// rates, ties toward the lower index; returned ascending.
std::vector<std::size_t> select_shared(const ActivationProfile& profile, std::size_t n_shared,
                                       std::size_t expert_size);

struct CentroidInit {
    std::vector<Centroid> centroids;
    std::vector<std::size_t> sources;
};

// Seeds one centroid per routed cluster from the n_routed non-shared neurons
// of highest activation rate (ties toward the lower index, listed in
// descending-rate order). Each centroid starts as that neuron's binary
// feature column.
CentroidInit init_centroids(const ActivationProfile& profile,
                            std::span<const std::size_t> shared, std::size_t n_routed);

// Feature columns of the marker matrix for the given neurons, one vector of
// length q per neuron.
std::vector<std::vector<float>> marker_columns(const Matrix& markers,
                                               std::span<const std::size_t> neurons);

// Pairwise L2 distances, entry (i,j) = distance from features[i] to
// centroids[j]. Kept in 64-bit; these feed the assignment solver directly.
struct DistanceMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

DistanceMatrix distance_matrix(const std::vector<std::vector<float>>& features,
                               const std::vector<Centroid>& centroids);

// Repeats every column of d expert_size times, turning the rectangular
// cluster-distance matrix into the square cost matrix of a balanced
// assignment: extended column p maps to cluster p / expert_size.
CostMatrix extend_distance_matrix(const DistanceMatrix& d, std::size_t expert_size);

// Invoked after each assignment step with the iteration number, the clusters
// over original neuron indices, and the centroids that assignment used.
using KmeansObserver = std::function<void(std::size_t iteration,
                                          const std::vector<std::vector<std::size_t>>& clusters,
                                          const std::vector<Centroid>& centroids)>;

struct KmeansResult {
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<Centroid> centroids;
    std::vector<double> objective_log;
    bool converged = false;
    std::size_t iterations = 0;
};

// Balanced k-means over the non-shared neurons: each iteration assigns
// neurons to centroids by solving the extended-matrix assignment problem
// (exactly expert_size members per cluster), then moves each centroid to the
// mean of its members. Stops when no centroid coordinate moves by more than
// 1e-9, or after max_kmeans_iters iterations (reported via `converged`, not
// an error). objective_log records the total member-to-centroid distance
// after every assignment step.
KmeansResult balanced_kmeans(const ActivationProfile& profile,
                             std::span<const std::size_t> shared, const MoeConfig& config,
                             const KmeansObserver& observer = {});

// Total L2 distance from each cluster member's feature column to its
// cluster's centroid.
double kmeans_objective(const Matrix& markers,
                        const std::vector<std::vector<std::size_t>>& clusters,
                        const std::vector<Centroid>& centroids);

// For each cluster, the member whose feature column is L2-closest to the
// cluster centroid; ties toward the lower neuron index.
std::vector<std::size_t> pick_representatives(const Matrix& markers,
                                              const std::vector<std::vector<std::size_t>>& clusters,
                                              const std::vector<Centroid>& centroids);

} // namespace moecarve
