#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "moecarve/carve.hpp"
#include "moecarve/profile.hpp"
#include "moecarve/safetensors.hpp"

namespace moecarve {

Tensor matrix_to_tensor(const Matrix& m);
Matrix matrix_from_tensor(const std::string& name, const Tensor& t);

// Dense FFN files hold tensors w_up, w_gate and w_down.
TensorFile dense_to_tensors(const DenseFfn& ffn);
DenseFfn dense_from_tensors(const TensorFile& tf);
DenseFfn load_dense_ffn(const std::string& path);
void save_dense_ffn(const DenseFfn& ffn, const std::string& path);

// Token files hold one tensor named tokens, either [q,d] or [batch,seq,d];
// a 3-d tensor is flattened to (batch*seq)×d on load.
CalibrationBatch load_batch(const std::string& path);
void save_batch(const CalibrationBatch& batch, const std::string& path);

// Profile artifact: the raw marker matrix [q,d_h] under `markers`, the
// activation rates under `mu`, with k_a and tokens in the metadata.
TensorFile profile_to_tensors(const ActivationProfile& profile);
ActivationProfile profile_from_tensors(const TensorFile& tf);

// Carved weight file layout: shared.{up,gate,down}, expert<p>.{up,gate,down}
// for p in 0..n_routed-1, router.{up,gate}, and the vectors u and b.
TensorFile moe_to_tensors(const MoeFfn& moe);

// Everything about a carve besides the weights: the configuration, the
// neuron partition and the clustering trace. Together with the weight file
// this reconstructs the runnable MoeFfn.
struct CarveManifest {
    MoeConfig config;
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 0;
    std::vector<std::size_t> shared;
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> representatives;
    std::vector<double> objective_log;
    bool kmeans_converged = false;
    std::size_t kmeans_iterations = 0;
};

CarveManifest make_manifest(const CarveResult& result, const MoeConfig& config,
                            std::size_t embed_dim, std::size_t hidden_dim);

// Serialization is key-sorted and therefore byte-deterministic for equal
// manifests.
std::string manifest_to_json(const CarveManifest& manifest);
CarveManifest manifest_from_json(const std::string& text);
void save_manifest(const CarveManifest& manifest, const std::string& path);
CarveManifest load_manifest(const std::string& path);

// Where the manifest of a weight file lives: the weight path with its
// extension replaced by .manifest.json.
std::string manifest_path_for(const std::string& weights_path);

// Rebuilds a MoeFfn from its weight tensors and manifest. u and b pass
// through float32 on disk; for the all-zero vectors carving produces the
// round trip is bit-exact.
MoeFfn moe_from_tensors(const TensorFile& tf, const CarveManifest& manifest);

MoeFfn load_moe(const std::string& weights_path, const CarveManifest& manifest);

} // namespace moecarve
