#include <doctest.h>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "moecarve/moe_io.hpp"
#include "moecarve/runtime.hpp"
#include "support/test_rng.hpp"

using namespace moecarve;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "moecarve_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

CarveResult carve_fixture(std::uint64_t seed, MoeConfig& config_out) {
    testsupport::Rng rng(seed);
    const DenseFfn ffn = rng.ffn(6, 12);
    const CalibrationBatch batch = rng.batch(20, 6);
    const ActivationProfile profile = build_profile(batch, ffn, 4, false);
    MoeConfig config;
    config.n_experts = 4;
    config.n_shared = 1;
    config.n_routed = 3;
    config.n_active = 2;
    config.expert_size = 3;
    config.k_a = 4;
    config_out = config;
    return carve_moe(ffn, profile, config);
}

} // namespace

TEST_CASE("matrix tensors keep shape and bits") {
    testsupport::Rng rng(7101);
    const Matrix m = rng.matrix(3, 5, 2.0);
    const Tensor t = matrix_to_tensor(m);
    CHECK(t.shape == std::vector<std::size_t>{3, 5});
    const Matrix back = matrix_from_tensor("m", t);
    CHECK(back == m);

    Tensor bad = t;
    bad.shape = {15};
    CHECK_THROWS_WITH_AS(static_cast<void>(matrix_from_tensor("m", bad)),
                         doctest::Contains("m"), std::invalid_argument);
}

TEST_CASE("dense network files round-trip") {
    testsupport::Rng rng(7102);
    const DenseFfn ffn = rng.ffn(5, 9);
    const auto path = temp_file("dense.safetensors");
    save_dense_ffn(ffn, path.string());
    const DenseFfn back = load_dense_ffn(path.string());
    CHECK(back.w_up == ffn.w_up);
    CHECK(back.w_gate == ffn.w_gate);
    CHECK(back.w_down == ffn.w_down);

    const TensorFile tf = dense_to_tensors(ffn);
    CHECK(tf.tensors.count("w_up") == 1);
    CHECK(tf.tensors.count("w_gate") == 1);
    CHECK(tf.tensors.count("w_down") == 1);

    TensorFile missing = tf;
    missing.tensors.erase("w_gate");
    CHECK_THROWS_AS(dense_from_tensors(missing), std::invalid_argument);
}

TEST_CASE("token files accept flat and batched layouts") {
    testsupport::Rng rng(7103);
    const CalibrationBatch flat = rng.batch(10, 4);
    const auto path = temp_file("tokens2d.safetensors");
    save_batch(flat, path.string());
    const CalibrationBatch back = load_batch(path.string());
    CHECK(back.tokens == flat.tokens);

    // A [2, 5, 4] tensor flattens to the same 10x4 token matrix.
    TensorFile tf;
    Tensor t;
    t.shape = {2, 5, 4};
    t.data.assign(flat.tokens.data().begin(), flat.tokens.data().end());
    tf.tensors["tokens"] = t;
    const auto path3 = temp_file("tokens3d.safetensors");
    save_tensors(tf, path3.string());
    const CalibrationBatch batched = load_batch(path3.string());
    CHECK(batched.tokens == flat.tokens);
}

TEST_CASE("profile artifacts round-trip") {
    testsupport::Rng rng(7104);
    const DenseFfn ffn = rng.ffn(6, 10);
    const CalibrationBatch batch = rng.batch(15, 6);
    const ActivationProfile profile = build_profile(batch, ffn, 3, false);

    const TensorFile tf = profile_to_tensors(profile);
    CHECK(tf.tensors.count("markers") == 1);
    CHECK(tf.tensors.count("mu") == 1);
    const ActivationProfile back = profile_from_tensors(tf);
    CHECK(back.markers == profile.markers);
    CHECK(back.k_a == profile.k_a);
    CHECK(back.tokens == profile.tokens);
    REQUIRE(back.rates.size() == profile.rates.size());
    for (std::size_t i = 0; i < back.rates.size(); ++i) {
        // Rates pass through float32 on disk.
        CHECK(back.rates[i] == doctest::Approx(profile.rates[i]).epsilon(1e-6));
    }
}

TEST_CASE("carved weight files use the documented tensor names") {
    MoeConfig config;
    const CarveResult result = carve_fixture(7105, config);
    const TensorFile tf = moe_to_tensors(result.moe);

    for (const char* name : {"shared.up", "shared.gate", "shared.down",
                             "expert0.up", "expert0.gate", "expert0.down",
                             "expert1.up", "expert1.gate", "expert1.down",
                             "expert2.up", "expert2.gate", "expert2.down",
                             "router.up", "router.gate", "u", "b"}) {
        CAPTURE(name);
        CHECK(tf.tensors.count(name) == 1);
    }
    CHECK(tf.tensors.size() == 16);
    CHECK(tf.tensors.at("u").shape == std::vector<std::size_t>{3});
    CHECK(tf.tensors.at("router.gate").shape == std::vector<std::size_t>{6, 3});
}

TEST_CASE("manifest json round-trips every field") {
    MoeConfig config;
    const CarveResult result = carve_fixture(7106, config);
    const CarveManifest manifest = make_manifest(result, config, 6, 12);

    const std::string text = manifest_to_json(manifest);
    const CarveManifest back = manifest_from_json(text);
    CHECK(back.embed_dim == 6);
    CHECK(back.hidden_dim == 12);
    CHECK(back.shared == manifest.shared);
    CHECK(back.clusters == manifest.clusters);
    CHECK(back.representatives == manifest.representatives);
    CHECK(back.objective_log == manifest.objective_log);
    CHECK(back.kmeans_converged == manifest.kmeans_converged);
    CHECK(back.kmeans_iterations == manifest.kmeans_iterations);
    CHECK(back.config.n_experts == config.n_experts);
    CHECK(back.config.n_shared == config.n_shared);
    CHECK(back.config.n_routed == config.n_routed);
    CHECK(back.config.n_active == config.n_active);
    CHECK(back.config.expert_size == config.expert_size);
    CHECK(back.config.k_a == config.k_a);
    CHECK(back.config.gamma == config.gamma);
    CHECK(back.config.seed == config.seed);

    // Serialization is deterministic.
    CHECK(manifest_to_json(back) == text);

    CHECK_THROWS_AS(manifest_from_json("{}"), std::invalid_argument);
    CHECK_THROWS_AS(manifest_from_json("not json"), std::invalid_argument);
}

TEST_CASE("manifest files save and load") {
    MoeConfig config;
    const CarveResult result = carve_fixture(7107, config);
    const CarveManifest manifest = make_manifest(result, config, 6, 12);
    const auto path = temp_file("carve.manifest.json");
    save_manifest(manifest, path.string());
    const CarveManifest back = load_manifest(path.string());
    CHECK(manifest_to_json(back) == manifest_to_json(manifest));
}

TEST_CASE("manifest_path_for swaps the extension") {
    CHECK(manifest_path_for("/tmp/model.safetensors") == "/tmp/model.manifest.json");
    CHECK(manifest_path_for("weights.st") == "weights.manifest.json");
}

TEST_CASE("a carved mixture survives the file round trip") {
    MoeConfig config;
    const CarveResult result = carve_fixture(7108, config);
    const CarveManifest manifest = make_manifest(result, config, 6, 12);

    const auto path = temp_file("moe.safetensors");
    save_tensors(moe_to_tensors(result.moe), path.string());
    const MoeFfn back = load_moe(path.string(), manifest);
    CHECK_NOTHROW(back.check());

    CHECK(back.shared.w_up == result.moe.shared.w_up);
    CHECK(back.shared.source_indices == result.moe.shared.source_indices);
    REQUIRE(back.routed.size() == result.moe.routed.size());
    for (std::size_t p = 0; p < back.routed.size(); ++p) {
        CHECK(back.routed[p].w_up == result.moe.routed[p].w_up);
        CHECK(back.routed[p].w_gate == result.moe.routed[p].w_gate);
        CHECK(back.routed[p].w_down == result.moe.routed[p].w_down);
        CHECK(back.routed[p].source_indices == result.moe.routed[p].source_indices);
    }
    CHECK(back.router.w_gate == result.moe.router.w_gate);
    CHECK(back.router.w_up == result.moe.router.w_up);
    CHECK(back.u == result.moe.u);
    CHECK(back.b == result.moe.b);
    CHECK(back.n_active == result.moe.n_active);

    // The reloaded mixture computes bit-identical outputs.
    testsupport::Rng rng(7109);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = rng.matrix(1, 6, 1.0);
        CHECK(moe_forward(back, x.row(0), GateMode::binary) ==
              moe_forward(result.moe, x.row(0), GateMode::binary));
    }
}

TEST_CASE("moe_from_tensors checks the manifest dimensions") {
    MoeConfig config;
    const CarveResult result = carve_fixture(7110, config);
    CarveManifest manifest = make_manifest(result, config, 6, 12);
    manifest.embed_dim = 7;
    CHECK_THROWS_AS(moe_from_tensors(moe_to_tensors(result.moe), manifest),
                    std::invalid_argument);
}
