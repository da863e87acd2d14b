#include "moecarve/run_config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace moecarve {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 15> kKeys = {
    "n_experts", "n_shared",  "n_routed", "n_active", "expert_size",
    "k_a",       "gamma",     "max_kmeans_iters", "normalize", "seed",
    "weights",   "calib",     "out",      "mode",     "steps",
};

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
        throw std::invalid_argument("config key '" + key + "' needs a non-negative integer, got '" +
                                    value + "'");
    }
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "' value '" + value +
                                    "' is out of range");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t consumed = 0;
    double parsed = 0.0;
    try {
        parsed = std::stod(value, &consumed);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "' needs a number, got '" + value + "'");
    }
    if (consumed != value.size()) {
        throw std::invalid_argument("config key '" + key + "' needs a number, got '" + value + "'");
    }
    return parsed;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw std::invalid_argument("config key '" + key + "' needs true/false/1/0, got '" + value +
                                "'");
}

std::uint64_t json_unsigned(const std::string& key, const json& value) {
    if (!value.is_number_unsigned()) {
        throw std::invalid_argument("config key '" + key + "' needs a non-negative integer");
    }
    return value.get<std::uint64_t>();
}

std::string json_string(const std::string& key, const json& value) {
    if (!value.is_string()) {
        throw std::invalid_argument("config key '" + key + "' needs a string");
    }
    return value.get<std::string>();
}

void apply_json_key(RunConfig& config, const std::string& key, const json& value) {
    if (key == "gamma") {
        if (!value.is_number()) {
            throw std::invalid_argument("config key 'gamma' needs a number");
        }
        config.moe.gamma = value.get<double>();
    } else if (key == "normalize") {
        if (!value.is_boolean()) {
            throw std::invalid_argument("config key 'normalize' needs a boolean");
        }
        config.moe.normalize = value.get<bool>();
    } else if (key == "weights" || key == "calib" || key == "out" || key == "mode") {
        set_config_key(config, key, json_string(key, value));
    } else {
        set_config_key(config, key, std::to_string(json_unsigned(key, value)));
    }
}

} // namespace

std::span<const char* const> run_config_keys() {
    return {kKeys.data(), kKeys.size()};
}

RunConfig parse_run_config(const std::string& json_text) {
    json parsed;
    try {
        parsed = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!parsed.is_object()) {
        throw std::invalid_argument("config must be a JSON object");
    }
    RunConfig config;
    for (const auto& [key, value] : parsed.items()) {
        if (std::find_if(kKeys.begin(), kKeys.end(),
                         [&](const char* k) { return key == k; }) == kKeys.end()) {
            std::string known;
            for (const char* k : kKeys) {
                known += known.empty() ? k : std::string(", ") + k;
            }
            throw std::invalid_argument("unknown config key '" + key + "'; known keys: " + known);
        }
        apply_json_key(config, key, value);
    }
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open config file " + path);
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

void set_config_key(RunConfig& config, const std::string& key, const std::string& value) {
    if (key == "n_experts") {
        config.moe.n_experts = parse_unsigned(key, value);
    } else if (key == "n_shared") {
        config.moe.n_shared = parse_unsigned(key, value);
    } else if (key == "n_routed") {
        config.moe.n_routed = parse_unsigned(key, value);
    } else if (key == "n_active") {
        config.moe.n_active = parse_unsigned(key, value);
    } else if (key == "expert_size") {
        config.moe.expert_size = parse_unsigned(key, value);
    } else if (key == "k_a") {
        config.moe.k_a = parse_unsigned(key, value);
    } else if (key == "gamma") {
        config.moe.gamma = parse_double(key, value);
    } else if (key == "max_kmeans_iters") {
        config.moe.max_kmeans_iters = parse_unsigned(key, value);
    } else if (key == "normalize") {
        config.moe.normalize = parse_bool(key, value);
    } else if (key == "seed") {
        config.moe.seed = parse_unsigned(key, value);
    } else if (key == "weights") {
        config.weights = value;
    } else if (key == "calib") {
        config.calib = value;
    } else if (key == "out") {
        config.out = value;
    } else if (key == "mode") {
        config.mode = parse_gate_mode(value);
    } else if (key == "steps") {
        config.steps = parse_unsigned(key, value);
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

void apply_env_overrides(RunConfig& config) {
    for (const char* key : kKeys) {
        std::string var = kEnvPrefix;
        for (const char* c = key; *c != '\0'; ++c) {
            var += static_cast<char>(std::toupper(static_cast<unsigned char>(*c)));
        }
        if (const char* value = std::getenv(var.c_str())) {
            set_config_key(config, key, value);
        }
    }
}

} // namespace moecarve
