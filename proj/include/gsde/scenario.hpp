#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gsde/grid.hpp"
#include "gsde/linalg.hpp"
#include "gsde/models.hpp"

namespace gsde {

inline constexpr int kScenarioSchemaVersion = 1;

/// One requested check. Tolerances map metric names to bounds: a key
/// "min_<metric>" is a lower bound, any other key an upper bound on the
/// metric of that name.
struct CheckSpec {
    std::string kind;
    std::string name;
    nlohmann::json params = nlohmann::json::object();
    std::map<std::string, double> tolerances;
};

struct GridConfig {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<double> dx;
    double dt = 0.0; // step of the grid solvers

    GridSpec spec() const;
};

struct ScenarioConfig {
    int schema_version = kScenarioSchemaVersion;
    std::string name;
    std::string model_id;
    nlohmann::json model_params = nlohmann::json::object();
    Vector x0;
    double T = 1.0;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    std::optional<GridConfig> grid;
    std::vector<CheckSpec> checks;
};

/// Parses and validates a scenario. Throws ConfigError naming the offending
/// JSON pointer and, when it can be located, the line.
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Built-in model registry: static, constant-drift, heat,
/// ornstein-uhlenbeck, pure-jump-lattice, multiplicative-jump, jump-diffusion.
Model build_model(const std::string& id, const nlohmann::json& params);
std::vector<std::string> model_ids();

/// Check kinds understood by run_scenario.
std::vector<std::string> check_kinds();

struct RunOptions {
    std::filesystem::path out_root = "runs";
    bool timestamp = true; // append _YYYYmmddTHHMMSS to the output directory
    bool deterministic = true;
    std::size_t threads = 0;
    std::optional<std::uint64_t> seed; // overrides the config seed
};

struct CheckResult {
    std::string name;
    std::string kind;
    bool pass = false;
    std::map<std::string, double> metrics;
    std::map<std::string, double> tolerances;
    double runtime_s = 0.0;
    std::vector<std::string> artifacts; // relative to the output directory
    std::string message;
};

struct RunReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    std::vector<CheckResult> checks;
    double runtime_s = 0.0;

    bool pass() const;
    nlohmann::ordered_json to_json() const;
};

/// Runs the checks in declared order, writing CSV artifacts, summary.json
/// and plot.gp under the output directory.
RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options);

} // namespace gsde
