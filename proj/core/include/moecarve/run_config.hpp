#pragma once

#include <span>
#include <string>

#include "moecarve/grouping.hpp"
#include "moecarve/runtime.hpp"

namespace moecarve {

// Everything one CLI invocation needs: conversion parameters plus file
// locations and report options. Sources are layered with later ones winning:
// built-in defaults, --config JSON file, MOECARVE_* environment variables,
// explicit command-line flags.
struct RunConfig {
    MoeConfig moe;
    std::string weights;
    std::string calib;
    std::string out;
    GateMode mode = GateMode::binary;
    std::size_t steps = 200;
};

// Environment variable prefix: every config key can be overridden through
// kEnvPrefix + upper-cased key, e.g. MOECARVE_N_EXPERTS.
inline constexpr const char* kEnvPrefix = "MOECARVE_";

// All recognized config keys.
std::span<const char* const> run_config_keys();

// Strict JSON parse: every key must be known and correctly typed.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Sets one key from its string form (as environment variables deliver it).
void set_config_key(RunConfig& config, const std::string& key, const std::string& value);

// Applies any MOECARVE_* variables present in the environment.
void apply_env_overrides(RunConfig& config);

} // namespace moecarve
