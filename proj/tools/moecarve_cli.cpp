// Command-line front end: profile activations, carve a dense FFN into a
// mixture-of-experts, evaluate the result, and simulate load balancing.
// Reports go to stdout as JSON; failures exit nonzero with an error JSON on
// stderr.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "moecarve/carve.hpp"
#include "moecarve/moe_io.hpp"
#include "moecarve/profile.hpp"
#include "moecarve/run_config.hpp"
#include "moecarve/runtime.hpp"
#include "moecarve/safetensors.hpp"

namespace {

using nlohmann::json;
using namespace moecarve;

struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> weights;
    std::optional<std::string> calib;
    std::optional<std::string> out;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
    cmd->add_option("--config", flags.config, "JSON run configuration file");
    cmd->add_option("--weights", flags.weights, "dense FFN weight file (safetensors)");
    cmd->add_option("--calib", flags.calib, "token file (safetensors)");
    cmd->add_option("--out", flags.out, "output artifact path");
    cmd->add_option("--mode", flags.mode, "gate mode: binary, scaled or generic");
    cmd->add_option("--seed", flags.seed, "seed for randomized baselines");
}

RunConfig assemble_config(const Flags& flags) {
    RunConfig cfg;
    if (flags.config) {
        cfg = load_run_config(*flags.config);
    }
    apply_env_overrides(cfg);
    if (flags.weights) cfg.weights = *flags.weights;
    if (flags.calib) cfg.calib = *flags.calib;
    if (flags.out) cfg.out = *flags.out;
    if (flags.mode) cfg.mode = parse_gate_mode(*flags.mode);
    if (flags.seed) cfg.moe.seed = *flags.seed;
    if (flags.steps) cfg.steps = *flags.steps;
    return cfg;
}

void require_path(const std::string& value, const char* key, const char* cmd) {
    if (value.empty()) {
        throw std::invalid_argument(std::string(cmd) + " needs '" + key +
                                    "' (flag --" + key + ", config key or environment override)");
    }
}

// Fills in expert_size from the hidden dimension when the config leaves it
// at 0; the consistency check still runs afterwards.
void resolve_expert_size(MoeConfig& moe, std::size_t hidden_dim) {
    if (moe.expert_size == 0 && moe.n_experts > 0 && hidden_dim % moe.n_experts == 0) {
        moe.expert_size = hidden_dim / moe.n_experts;
    }
}

void print_report(const json& report) {
    std::cout << report.dump(2) << "\n";
}

int cmd_profile(RunConfig cfg) {
    require_path(cfg.weights, "weights", "profile");
    require_path(cfg.calib, "calib", "profile");
    require_path(cfg.out, "out", "profile");

    const DenseFfn ffn = load_dense_ffn(cfg.weights);
    const CalibrationBatch batch = load_batch(cfg.calib);
    const ActivationProfile profile = build_profile(batch, ffn, cfg.moe.k_a, cfg.moe.normalize);
    save_tensors(profile_to_tensors(profile), cfg.out);

    constexpr std::size_t kBins = 50;
    std::array<std::size_t, kBins> counts{};
    double sum_rates = 0.0;
    for (double mu : profile.rates) {
        const auto bin = std::min(static_cast<std::size_t>(mu * kBins), kBins - 1);
        ++counts[bin];
        sum_rates += mu;
    }
    print_report({{"out", cfg.out},
                  {"hidden_dim", profile.markers.cols()},
                  {"tokens", profile.tokens},
                  {"k_a", profile.k_a},
                  {"sum_rates", sum_rates},
                  {"mu_histogram",
                   {{"bins", kBins}, {"lo", 0.0}, {"hi", 1.0}, {"counts", counts}}}});
    return 0;
}

int cmd_carve(RunConfig cfg) {
    require_path(cfg.weights, "weights", "carve");
    require_path(cfg.calib, "calib", "carve");
    require_path(cfg.out, "out", "carve");

    const DenseFfn ffn = load_dense_ffn(cfg.weights);
    const CalibrationBatch batch = load_batch(cfg.calib);
    resolve_expert_size(cfg.moe, ffn.hidden_dim());
    const ActivationProfile profile = build_profile(batch, ffn, cfg.moe.k_a, cfg.moe.normalize);
    const CarveResult result = carve_moe(ffn, profile, cfg.moe);

    save_tensors(moe_to_tensors(result.moe), cfg.out);
    const std::string manifest_path = manifest_path_for(cfg.out);
    save_manifest(make_manifest(result, cfg.moe, ffn.embed_dim(), ffn.hidden_dim()),
                  manifest_path);

    print_report({{"out", cfg.out},
                  {"manifest", manifest_path},
                  {"embed_dim", ffn.embed_dim()},
                  {"hidden_dim", ffn.hidden_dim()},
                  {"shared_width", result.moe.shared.width()},
                  {"n_routed", result.moe.n_routed()},
                  {"expert_size", cfg.moe.expert_size},
                  {"kmeans",
                   {{"iterations", result.kmeans_iterations},
                    {"converged", result.kmeans_converged},
                    {"final_objective",
                     result.objective_log.empty() ? 0.0 : result.objective_log.back()}}}});
    return 0;
}

int cmd_eval(RunConfig cfg) {
    require_path(cfg.weights, "weights", "eval");
    require_path(cfg.calib, "calib", "eval");
    require_path(cfg.out, "out", "eval");

    const DenseFfn ffn = load_dense_ffn(cfg.weights);
    const CalibrationBatch batch = load_batch(cfg.calib);
    const CarveManifest manifest = load_manifest(manifest_path_for(cfg.out));
    const MoeFfn moe = load_moe(cfg.out, manifest);

    LoadStats stats(moe.n_routed());
    double mean_rel = 0.0;
    double max_rel = 0.0;
    for (std::size_t row = 0; row < batch.tokens.rows(); ++row) {
        const auto x = batch.tokens.row(row);
        stats.accumulate(route(moe, x, cfg.mode));
        const std::vector<float> dense = dense_forward(ffn, x);
        const std::vector<float> sparse = moe_forward(moe, x, cfg.mode);
        double diff_sq = 0.0;
        double dense_sq = 0.0;
        for (std::size_t t = 0; t < dense.size(); ++t) {
            const double d = static_cast<double>(sparse[t]) - static_cast<double>(dense[t]);
            diff_sq += d * d;
            dense_sq += static_cast<double>(dense[t]) * static_cast<double>(dense[t]);
        }
        const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(dense_sq), 1e-30);
        mean_rel += rel;
        max_rel = std::max(max_rel, rel);
    }
    mean_rel /= static_cast<double>(batch.tokens.rows());

    const FidelityReport fidelity = routing_fidelity(moe, ffn, batch, cfg.moe.seed);
    const FlopReport flops = flop_report(moe);

    print_report(
        {{"tokens", batch.tokens.rows()},
         {"mode", gate_mode_name(cfg.mode)},
         {"relative_l2", {{"mean", mean_rel}, {"max", max_rel}}},
         {"fidelity",
          {{"mean_overlap", fidelity.mean_overlap},
           {"random_overlap", fidelity.random_overlap},
           {"router_deactivated_mass", fidelity.router_deactivated_mass},
           {"oracle_deactivated_mass", fidelity.oracle_deactivated_mass},
           {"random_deactivated_mass", fidelity.random_deactivated_mass},
           {"router_not_worse_fraction", fidelity.router_not_worse_fraction}}},
         {"load", {{"counts", stats.counts}, {"tokens", stats.tokens}}},
         {"flops",
          {{"dense_per_token", flops.dense_per_token},
           {"moe_ffn_per_token", flops.moe_ffn_per_token},
           {"router_per_token", flops.router_per_token},
           {"ffn_ratio", flops.ffn_ratio},
           {"total_ratio", flops.total_ratio}}}});
    return 0;
}

int cmd_balance_sim(RunConfig cfg) {
    require_path(cfg.calib, "calib", "balance-sim");
    require_path(cfg.out, "out", "balance-sim");
    if (cfg.steps == 0) {
        throw std::invalid_argument("balance-sim needs at least one step");
    }

    const CalibrationBatch batch = load_batch(cfg.calib);
    const CarveManifest manifest = load_manifest(manifest_path_for(cfg.out));
    MoeFfn moe = load_moe(cfg.out, manifest);

    std::vector<double> ratio_log;
    std::vector<std::size_t> final_counts;
    ratio_log.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        LoadStats stats(moe.n_routed());
        for (std::size_t row = 0; row < batch.tokens.rows(); ++row) {
            stats.accumulate(route(moe, batch.tokens.row(row), GateMode::binary));
        }
        const std::size_t max_count = *std::max_element(stats.counts.begin(), stats.counts.end());
        const std::size_t min_count = *std::min_element(stats.counts.begin(), stats.counts.end());
        ratio_log.push_back(static_cast<double>(max_count) /
                            static_cast<double>(std::max<std::size_t>(min_count, 1)));
        moe.b = update_balance_bias(moe.b, stats, cfg.moe.gamma);
        if (step + 1 == cfg.steps) {
            final_counts = stats.counts;
        }
    }
    print_report({{"steps", cfg.steps},
                  {"gamma", cfg.moe.gamma},
                  {"tokens_per_step", batch.tokens.rows()},
                  {"initial_ratio", ratio_log.front()},
                  {"final_ratio", ratio_log.back()},
                  {"ratio_log", ratio_log},
                  {"final_counts", final_counts}});
    return 0;
}

int fail_json(const std::string& kind, const std::string& message) {
    const json err = {{"error", {{"kind", kind}, {"message", message}}}};
    std::cerr << err.dump() << "\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dense SwiGLU FFN to mixture-of-experts conversion toolkit"};
    app.require_subcommand(1);

    Flags flags;
    CLI::App* profile = app.add_subcommand("profile", "record activation statistics");
    CLI::App* carve = app.add_subcommand("carve", "convert a dense FFN into a MoE");
    CLI::App* eval = app.add_subcommand("eval", "compare a carved MoE against its dense FFN");
    CLI::App* balance =
        app.add_subcommand("balance-sim", "simulate bias-based load balancing");
    for (CLI::App* cmd : {profile, carve, eval, balance}) {
        add_common_flags(cmd, flags);
    }
    balance->add_option("--steps", flags.steps, "number of bias update steps");

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = assemble_config(flags);
        if (profile->parsed()) return cmd_profile(cfg);
        if (carve->parsed()) return cmd_carve(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        return cmd_balance_sim(cfg);
    } catch (const TensorFileError& e) {
        return fail_json(e.kind_name(), e.what());
    } catch (const std::invalid_argument& e) {
        return fail_json("config", e.what());
    } catch (const std::out_of_range& e) {
        return fail_json("config", e.what());
    } catch (const std::exception& e) {
        return fail_json("internal", e.what());
    }
}
