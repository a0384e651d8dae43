#pragma once
// Named batch experiments, their manifests and the plain-text report.

#include "config.hpp"

#include "json.hpp"

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace ldet::cli {

/// One checked statement: pass iff error ≤ tolerance.
struct Assertion {
    std::string name;
    std::string anchor; ///< the statement being checked, in words
    double value = 0.0, target = 0.0, error = 0.0, tolerance = 0.0;
    bool pass = false;
    nlohmann::json to_json() const;
};

struct ExperimentResult {
    std::vector<Assertion> assertions;
    std::map<std::string, std::string> csv; ///< file name → contents
    std::vector<std::string> recipes;       ///< random-field recipes used (name + seed)
    nlohmann::json summary = nlohmann::json::object();
    bool ok() const;
};

/// Runs the experiment in-process (no files written).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// The manifest for a finished run: config, inputs hash, versions, assertions,
/// artifact hashes. Contains no timestamps, so equal inputs give equal bytes.
nlohmann::json make_manifest(const ExperimentConfig& cfg, const ExperimentResult& res);

/// Runs, writes <out>/manifest.json and the CSVs, prints failed assertions to `err`.
/// Returns 0 if every assertion passed, 1 otherwise.
int run_and_write(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

/// Plain-text table (one row per assertion) from <dir>/manifest.json; throws
/// std::runtime_error if the manifest is missing or malformed.
std::string report(const std::string& dir);

/// CSV columns written by each experiment (for --help).
std::string csv_help(const std::string& experiment);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

} // namespace ldet::cli
