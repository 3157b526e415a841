#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hypersde/params.hpp"

namespace hypersde::cli {

using Json = nlohmann::ordered_json;

enum class ControllerKind { open_loop, stabilizing, lq };

std::string_view to_string(ControllerKind kind);
ControllerKind controller_kind(std::string_view name);

struct ControllerConfig {
    ControllerKind kind = ControllerKind::stabilizing;
    /// Empty means the default pole set.
    std::vector<std::complex<double>> poles;
    double q_weight = 1.0;
    double r_weight = 0.1;
    bool operator==(const ControllerConfig&) const = default;
};

struct MonteCarloConfig {
    int n_paths = 10000;
    std::uint64_t base_seed = 7;
    int threads = 1;
    bool operator==(const MonteCarloConfig&) const = default;
};

struct OutputConfig {
    /// Empty: fall back to HYPERSDE_OUT, then ./out.
    std::string directory;
    bool fields = false;
    bool operator==(const OutputConfig&) const = default;
};

struct ScenarioConfig {
    SystemParams params;
    int nx = 200;
    ControllerConfig controller;
    MonteCarloConfig montecarlo;
    OutputConfig outputs;
    bool operator==(const ScenarioConfig&) const = default;
};

/// Throws ConfigError on unknown keys, wrong types or invalid parameters.
ScenarioConfig config_from_json(const Json& j);
Json config_to_json(const ScenarioConfig& config);

ScenarioConfig load_config(const std::filesystem::path& file);
std::string emit_config(const ScenarioConfig& config);

/// "fig1" or "decoupled".
ScenarioConfig preset(std::string_view name);

/// Output directory: config value, else $HYPERSDE_OUT, else "out".
std::filesystem::path output_directory(const ScenarioConfig& config);

}  // namespace hypersde::cli
