// Regenerates the synthetic test fixtures: a small dense SwiGLU FFN, a
// calibration batch with mild per-sequence cluster structure, and a held-out
// evaluation batch. Outputs are deterministic for a given seed (mt19937_64
// bit stream, no distribution library involved) and are committed to the
// repository.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moecarve/profile.hpp"
#include "moecarve/safetensors.hpp"

namespace {

using namespace moecarve;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0,1) from the top 53 bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [-scale, scale).
    float sym(double scale) { return static_cast<float>((uniform() * 2.0 - 1.0) * scale); }

private:
    std::mt19937_64 engine_;
};

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(t.element_count());
    for (float& v : t.data) {
        v = rng.sym(scale);
    }
    return t;
}

// Tokens drawn around per-sequence centers so the activation profile has
// visible cluster structure instead of pure noise.
Tensor clustered_tokens(Rng& rng, std::size_t n_seq, std::size_t seq_len, std::size_t d,
                        const std::vector<std::vector<float>>& centers, bool three_dim) {
    Tensor t;
    t.shape = three_dim ? std::vector<std::size_t>{n_seq, seq_len, d}
                        : std::vector<std::size_t>{n_seq * seq_len, d};
    t.data.reserve(n_seq * seq_len * d);
    for (std::size_t s = 0; s < n_seq; ++s) {
        const auto& center = centers[s % centers.size()];
        for (std::size_t i = 0; i < seq_len; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                t.data.push_back(center[j] + rng.sym(0.35));
            }
        }
    }
    return t;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"regenerate the committed safetensors fixtures"};
    std::string dir = "tests/fixtures";
    std::uint64_t seed = 42;
    app.add_option("--dir", dir, "output directory");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    constexpr std::size_t d = 32;
    constexpr std::size_t d_h = 64;
    constexpr std::size_t n_seq = 8;
    constexpr std::size_t seq_len = 128;
    constexpr std::size_t eval_tokens = 256;

    std::filesystem::create_directories(dir);
    Rng rng(seed);

    TensorFile ffn;
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));
    const double down_scale = 1.0 / std::sqrt(static_cast<double>(d_h));
    ffn.tensors["w_up"] = random_tensor(rng, {d, d_h}, w_scale);
    ffn.tensors["w_gate"] = random_tensor(rng, {d, d_h}, w_scale);
    ffn.tensors["w_down"] = random_tensor(rng, {d_h, d}, down_scale);
    save_tensors(ffn, dir + "/dense_ffn.safetensors");

    std::vector<std::vector<float>> centers(n_seq, std::vector<float>(d));
    for (auto& center : centers) {
        for (float& v : center) {
            v = rng.sym(1.0);
        }
    }

    TensorFile calib;
    calib.tensors["tokens"] = clustered_tokens(rng, n_seq, seq_len, d, centers, true);
    save_tensors(calib, dir + "/calib.safetensors");

    TensorFile eval;
    eval.tensors["tokens"] = clustered_tokens(rng, eval_tokens, 1, d, centers, false);
    save_tensors(eval, dir + "/eval_tokens.safetensors");

    std::cout << "wrote dense_ffn, calib and eval_tokens fixtures to " << dir << "\n";
    return 0;
}
