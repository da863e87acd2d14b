#include "moecarve/moe_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace moecarve {

namespace {

using nlohmann::json;

const Tensor& need_tensor(const TensorFile& tf, const std::string& name) {
    const auto it = tf.tensors.find(name);
    if (it == tf.tensors.end()) {
        throw std::invalid_argument("tensor file is missing '" + name + "'");
    }
    return it->second;
}

Tensor vector_to_tensor(const std::vector<double>& v) {
    Tensor t;
    t.shape = {v.size()};
    t.data.reserve(v.size());
    for (double x : v) {
        t.data.push_back(static_cast<float>(x));
    }
    return t;
}

std::vector<double> vector_from_tensor(const std::string& name, const Tensor& t) {
    if (t.shape.size() != 1) {
        throw std::invalid_argument("tensor '" + name + "' must be one-dimensional");
    }
    return {t.data.begin(), t.data.end()};
}

json size_array(const std::vector<std::size_t>& v) {
    return json(v);
}

std::vector<std::size_t> json_size_vector(const json& j, const std::string& what) {
    if (!j.is_array()) {
        throw std::invalid_argument("manifest field '" + what + "' must be an array");
    }
    std::vector<std::size_t> out;
    out.reserve(j.size());
    for (const auto& item : j) {
        if (!item.is_number_unsigned()) {
            throw std::invalid_argument("manifest field '" + what +
                                        "' must hold non-negative integers");
        }
        out.push_back(item.get<std::size_t>());
    }
    return out;
}

const json& need_field(const json& j, const std::string& key, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw std::invalid_argument(where + " is missing field '" + key + "'");
    }
    return *it;
}

std::size_t need_unsigned(const json& j, const std::string& key, const std::string& where) {
    const json& field = need_field(j, key, where);
    if (!field.is_number_unsigned()) {
        throw std::invalid_argument(where + " field '" + key + "' must be a non-negative integer");
    }
    return field.get<std::size_t>();
}

json moe_config_to_json(const MoeConfig& config) {
    return {{"n_experts", config.n_experts},
            {"n_shared", config.n_shared},
            {"n_routed", config.n_routed},
            {"n_active", config.n_active},
            {"expert_size", config.expert_size},
            {"k_a", config.k_a},
            {"gamma", config.gamma},
            {"max_kmeans_iters", config.max_kmeans_iters},
            {"normalize", config.normalize},
            {"seed", config.seed}};
}

MoeConfig moe_config_from_json(const json& j) {
    MoeConfig config;
    config.n_experts = need_unsigned(j, "n_experts", "manifest config");
    config.n_shared = need_unsigned(j, "n_shared", "manifest config");
    config.n_routed = need_unsigned(j, "n_routed", "manifest config");
    config.n_active = need_unsigned(j, "n_active", "manifest config");
    config.expert_size = need_unsigned(j, "expert_size", "manifest config");
    config.k_a = need_unsigned(j, "k_a", "manifest config");
    const json& gamma = need_field(j, "gamma", "manifest config");
    if (!gamma.is_number()) {
        throw std::invalid_argument("manifest config field 'gamma' must be a number");
    }
    config.gamma = gamma.get<double>();
    config.max_kmeans_iters = need_unsigned(j, "max_kmeans_iters", "manifest config");
    const json& normalize = need_field(j, "normalize", "manifest config");
    if (!normalize.is_boolean()) {
        throw std::invalid_argument("manifest config field 'normalize' must be a boolean");
    }
    config.normalize = normalize.get<bool>();
    config.seed = need_unsigned(j, "seed", "manifest config");
    return config;
}

void write_text_atomic(const std::string& text, const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw std::invalid_argument("cannot open " + tmp.string() + " for writing");
        }
        out << text;
        out.flush();
        if (!out) {
            throw std::invalid_argument("write failure on " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw std::invalid_argument("cannot rename " + tmp.string() + " to " + path + ": " +
                                    ec.message());
    }
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open " + path);
    }
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

} // namespace

Tensor matrix_to_tensor(const Matrix& m) {
    Tensor t;
    t.shape = {m.rows(), m.cols()};
    t.data.assign(m.data().begin(), m.data().end());
    return t;
}

Matrix matrix_from_tensor(const std::string& name, const Tensor& t) {
    if (t.shape.size() != 2) {
        throw std::invalid_argument("tensor '" + name + "' must be two-dimensional, has " +
                                    std::to_string(t.shape.size()) + " dims");
    }
    return Matrix(t.shape[0], t.shape[1], t.data);
}

TensorFile dense_to_tensors(const DenseFfn& ffn) {
    ffn.check();
    TensorFile tf;
    tf.tensors["w_up"] = matrix_to_tensor(ffn.w_up);
    tf.tensors["w_gate"] = matrix_to_tensor(ffn.w_gate);
    tf.tensors["w_down"] = matrix_to_tensor(ffn.w_down);
    return tf;
}

DenseFfn dense_from_tensors(const TensorFile& tf) {
    DenseFfn ffn;
    ffn.w_up = matrix_from_tensor("w_up", need_tensor(tf, "w_up"));
    ffn.w_gate = matrix_from_tensor("w_gate", need_tensor(tf, "w_gate"));
    ffn.w_down = matrix_from_tensor("w_down", need_tensor(tf, "w_down"));
    ffn.check();
    return ffn;
}

DenseFfn load_dense_ffn(const std::string& path) {
    return dense_from_tensors(load_tensors(path));
}

void save_dense_ffn(const DenseFfn& ffn, const std::string& path) {
    save_tensors(dense_to_tensors(ffn), path);
}

CalibrationBatch load_batch(const std::string& path) {
    const TensorFile tf = load_tensors(path);
    const Tensor& t = need_tensor(tf, "tokens");
    if (t.shape.size() == 2) {
        return {Matrix(t.shape[0], t.shape[1], t.data)};
    }
    if (t.shape.size() == 3) {
        return {Matrix(t.shape[0] * t.shape[1], t.shape[2], t.data)};
    }
    throw std::invalid_argument("tensor 'tokens' must be [q,d] or [batch,seq,d], has " +
                                std::to_string(t.shape.size()) + " dims");
}

void save_batch(const CalibrationBatch& batch, const std::string& path) {
    TensorFile tf;
    tf.tensors["tokens"] = matrix_to_tensor(batch.tokens);
    save_tensors(tf, path);
}

TensorFile profile_to_tensors(const ActivationProfile& profile) {
    TensorFile tf;
    tf.tensors["markers"] = matrix_to_tensor(profile.markers);
    tf.tensors["mu"] = vector_to_tensor(profile.rates);
    tf.metadata["k_a"] = std::to_string(profile.k_a);
    tf.metadata["tokens"] = std::to_string(profile.tokens);
    return tf;
}

ActivationProfile profile_from_tensors(const TensorFile& tf) {
    ActivationProfile profile;
    profile.markers = matrix_from_tensor("markers", need_tensor(tf, "markers"));
    profile.rates = vector_from_tensor("mu", need_tensor(tf, "mu"));
    const auto k_a = tf.metadata.find("k_a");
    const auto tokens = tf.metadata.find("tokens");
    if (k_a == tf.metadata.end() || tokens == tf.metadata.end()) {
        throw std::invalid_argument("profile file is missing k_a/tokens metadata");
    }
    profile.k_a = std::stoull(k_a->second);
    profile.tokens = std::stoull(tokens->second);
    return profile;
}

TensorFile moe_to_tensors(const MoeFfn& moe) {
    moe.check();
    TensorFile tf;
    tf.tensors["shared.up"] = matrix_to_tensor(moe.shared.w_up);
    tf.tensors["shared.gate"] = matrix_to_tensor(moe.shared.w_gate);
    tf.tensors["shared.down"] = matrix_to_tensor(moe.shared.w_down);
    for (std::size_t p = 0; p < moe.routed.size(); ++p) {
        const std::string prefix = "expert" + std::to_string(p);
        tf.tensors[prefix + ".up"] = matrix_to_tensor(moe.routed[p].w_up);
        tf.tensors[prefix + ".gate"] = matrix_to_tensor(moe.routed[p].w_gate);
        tf.tensors[prefix + ".down"] = matrix_to_tensor(moe.routed[p].w_down);
    }
    tf.tensors["router.up"] = matrix_to_tensor(moe.router.w_up);
    tf.tensors["router.gate"] = matrix_to_tensor(moe.router.w_gate);
    tf.tensors["u"] = vector_to_tensor(moe.u);
    tf.tensors["b"] = vector_to_tensor(moe.b);
    return tf;
}

CarveManifest make_manifest(const CarveResult& result, const MoeConfig& config,
                            std::size_t embed_dim, std::size_t hidden_dim) {
    CarveManifest manifest;
    manifest.config = config;
    manifest.embed_dim = embed_dim;
    manifest.hidden_dim = hidden_dim;
    manifest.shared = result.partition.shared;
    manifest.clusters = result.partition.clusters;
    manifest.representatives = result.partition.representatives;
    manifest.objective_log = result.objective_log;
    manifest.kmeans_converged = result.kmeans_converged;
    manifest.kmeans_iterations = result.kmeans_iterations;
    return manifest;
}

std::string manifest_to_json(const CarveManifest& manifest) {
    json clusters = json::array();
    for (const auto& cluster : manifest.clusters) {
        clusters.push_back(size_array(cluster));
    }
    const json j = {{"config", moe_config_to_json(manifest.config)},
                    {"embed_dim", manifest.embed_dim},
                    {"hidden_dim", manifest.hidden_dim},
                    {"shared", size_array(manifest.shared)},
                    {"clusters", clusters},
                    {"representatives", size_array(manifest.representatives)},
                    {"kmeans",
                     {{"objective_log", manifest.objective_log},
                      {"iterations", manifest.kmeans_iterations},
                      {"converged", manifest.kmeans_converged}}}};
    return j.dump(2) + "\n";
}

CarveManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("manifest is not valid JSON: ") + e.what());
    }
    CarveManifest manifest;
    manifest.config = moe_config_from_json(need_field(j, "config", "manifest"));
    manifest.embed_dim = need_unsigned(j, "embed_dim", "manifest");
    manifest.hidden_dim = need_unsigned(j, "hidden_dim", "manifest");
    manifest.shared = json_size_vector(need_field(j, "shared", "manifest"), "shared");
    const json& clusters = need_field(j, "clusters", "manifest");
    if (!clusters.is_array()) {
        throw std::invalid_argument("manifest field 'clusters' must be an array");
    }
    for (const auto& cluster : clusters) {
        manifest.clusters.push_back(json_size_vector(cluster, "clusters"));
    }
    manifest.representatives =
        json_size_vector(need_field(j, "representatives", "manifest"), "representatives");
    const json& kmeans = need_field(j, "kmeans", "manifest");
    const json& log = need_field(kmeans, "objective_log", "manifest kmeans");
    if (!log.is_array()) {
        throw std::invalid_argument("manifest kmeans field 'objective_log' must be an array");
    }
    for (const auto& value : log) {
        if (!value.is_number()) {
            throw std::invalid_argument("manifest kmeans objective_log must hold numbers");
        }
        manifest.objective_log.push_back(value.get<double>());
    }
    manifest.kmeans_iterations = need_unsigned(kmeans, "iterations", "manifest kmeans");
    const json& converged = need_field(kmeans, "converged", "manifest kmeans");
    if (!converged.is_boolean()) {
        throw std::invalid_argument("manifest kmeans field 'converged' must be a boolean");
    }
    manifest.kmeans_converged = converged.get<bool>();
    return manifest;
}

void save_manifest(const CarveManifest& manifest, const std::string& path) {
    write_text_atomic(manifest_to_json(manifest), path);
}

CarveManifest load_manifest(const std::string& path) {
    return manifest_from_json(read_text(path));
}

std::string manifest_path_for(const std::string& weights_path) {
    std::filesystem::path p(weights_path);
    p.replace_extension(".manifest.json");
    return p.string();
}

MoeFfn moe_from_tensors(const TensorFile& tf, const CarveManifest& manifest) {
    MoeFfn moe;
    moe.shared.w_up = matrix_from_tensor("shared.up", need_tensor(tf, "shared.up"));
    moe.shared.w_gate = matrix_from_tensor("shared.gate", need_tensor(tf, "shared.gate"));
    moe.shared.w_down = matrix_from_tensor("shared.down", need_tensor(tf, "shared.down"));
    moe.shared.source_indices = manifest.shared;
    for (std::size_t p = 0; p < manifest.clusters.size(); ++p) {
        const std::string prefix = "expert" + std::to_string(p);
        ExpertWeights e;
        e.w_up = matrix_from_tensor(prefix + ".up", need_tensor(tf, prefix + ".up"));
        e.w_gate = matrix_from_tensor(prefix + ".gate", need_tensor(tf, prefix + ".gate"));
        e.w_down = matrix_from_tensor(prefix + ".down", need_tensor(tf, prefix + ".down"));
        e.source_indices = manifest.clusters[p];
        moe.routed.push_back(std::move(e));
    }
    moe.router.w_up = matrix_from_tensor("router.up", need_tensor(tf, "router.up"));
    moe.router.w_gate = matrix_from_tensor("router.gate", need_tensor(tf, "router.gate"));
    moe.router.source_indices = manifest.representatives;
    moe.u = vector_from_tensor("u", need_tensor(tf, "u"));
    moe.b = vector_from_tensor("b", need_tensor(tf, "b"));
    moe.n_active = manifest.config.n_active;
    moe.check();
    if (moe.embed_dim() != manifest.embed_dim) {
        throw std::invalid_argument("weight file embed dim " + std::to_string(moe.embed_dim()) +
                                    " does not match manifest " +
                                    std::to_string(manifest.embed_dim));
    }
    return moe;
}

MoeFfn load_moe(const std::string& weights_path, const CarveManifest& manifest) {
    return moe_from_tensors(load_tensors(weights_path), manifest);
}

} // namespace moecarve
