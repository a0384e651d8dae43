#pragma once
// Experiment configuration: a TOML subset or JSON file, validated against a
// per-experiment schema (unknown keys are errors).

#include "ldet/conformal.hpp"

#include "json.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldet::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses the TOML subset used by experiment files: [tables] (dotted names allowed),
/// key = value with bare or quoted keys, basic/literal strings, integers, floats
/// (incl. inf/nan), booleans, arrays (multi-line, trailing comma) and inline tables.
nlohmann::json parse_toml(const std::string& text);

/// Reads a file, dispatching on the extension (.json → JSON, anything else → TOML).
nlohmann::json read_config_file(const std::string& path);

const std::vector<std::string>& experiment_names();

struct MetricSource {
    std::string source = "flat"; ///< flat | random | file
    RandomRecipe recipe{1, 0.2, 0.3};
    std::uint64_t seed_offset = 0; ///< the metric uses seed + seed_offset
    std::string path;              ///< stem for `file`
};

struct ExperimentConfig {
    std::string experiment;
    GammaWeights gamma;
    int n = 16;
    double L = 0.0; ///< 0 → 2π
    MetricSource metric;
    nlohmann::json params; ///< experiment parameters with defaults filled in
    std::string out = "ldet_out";
    std::uint64_t seed = 0;
    int threads = 1;

    ConformalMetric make_metric() const;
    /// Canonical JSON (sorted keys, defaults filled): the input of the manifest hash.
    nlohmann::json canonical() const;
};

/// Default parameters of each experiment (also the set of accepted keys).
nlohmann::json default_params(const std::string& experiment);

/// Builds a config for `experiment` from a parsed document (may be empty). Throws
/// ConfigError on unknown keys, type mismatches and invalid values.
ExperimentConfig make_config(const std::string& experiment, const nlohmann::json& doc);

} // namespace ldet::cli
