#pragma once

#include "condiff/experiments.hpp"
#include "condiff/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace condiff {

// Sectioned key = value configuration.  Unknown keys and sections are hard
// errors; duplicates report both line numbers.  See docs in README for the
// full key reference.

struct ParsedConfig {
    ProblemSpec problem;
    std::optional<ProblemSpec> problem_tilde; // [contraction] section
    EnsembleConfig ensemble;
    std::vector<double> mollified_epsilons = {0.04, 0.08, 0.16};
    std::uint64_t config_hash = 0;
};

ParsedConfig parse_config(const std::string& text);
ParsedConfig parse_config_file(const std::string& path);

// fixed suite registry
const std::vector<std::string>& suite_registry();

struct RunManifest {
    std::string config_path;
    std::vector<std::string> suites;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    std::optional<int> paths_override;
    std::optional<int> cells_override;
    bool plot_data = false;
};

// Executes the selected suites, writes per-suite reports, a validation
// report, and a provenance file into out_dir.  Returns 0 iff every verdict
// passed.
int run_manifest(const RunManifest& manifest);

} // namespace condiff
