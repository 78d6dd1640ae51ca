#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace condiff {

// Every verdict records the inequality it tested: estimate/SE for the
// statistic, and the two sides as evaluated.
struct MetricResult {
    std::string name;
    double estimate = 0.0;
    double standard_error = 0.0;
    double tolerance = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    std::string comparison; // human-readable, e.g. "e(T) <= exp(L T) e(0) + 3 SE + allow"
    bool pass = true;
    bool report_only = false;
};

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct Provenance {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    int paths = 0;
    int cells = 0;
    int k_modes = 0;
    std::vector<int> levels;
    std::string notes;
};

struct ExperimentReport {
    std::string suite;
    Provenance prov;
    std::vector<MetricResult> metrics;
    std::vector<PlotSeries> plots;

    bool pass() const;
    std::string to_csv() const;
    std::string plot_csv() const;
};

void write_text_file(const std::string& filename, const std::string& content);
std::string format_hash(std::uint64_t h);

// Per-(pair, path) residual rows for an entropy-battery report:
// "pair,path,R,tolerance,verdict".
std::string entropy_residual_rows_csv(const ExperimentReport& battery_report);

} // namespace condiff
