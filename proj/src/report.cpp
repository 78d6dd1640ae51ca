#include "condiff/report.hpp"
#include "condiff/errors.hpp"

#include <cstdio>
#include <sstream>

namespace condiff {

bool ExperimentReport::pass() const {
    for (const auto& m : metrics)
        if (!m.report_only && !m.pass) return false;
    return true;
}

std::string format_hash(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

void provenance_header(std::ostringstream& os, const ExperimentReport& r) {
    os << "# suite=" << r.suite << " config=" << format_hash(r.prov.config_hash)
       << " seed=" << r.prov.seed << " paths=" << r.prov.paths << " cells=" << r.prov.cells
       << " k_modes=" << r.prov.k_modes;
    if (!r.prov.levels.empty()) {
        os << " levels=";
        for (std::size_t i = 0; i < r.prov.levels.size(); ++i)
            os << (i ? "|" : "") << r.prov.levels[i];
    }
    if (!r.prov.notes.empty()) os << " " << r.prov.notes;
    os << "\n";
}

} // namespace

std::string ExperimentReport::to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "# condiff-report v1\n";
    provenance_header(os, *this);
    os << "metric,estimate,standard_error,tolerance,lhs,rhs,comparison,verdict\n";
    for (const auto& m : metrics) {
        os << m.name << "," << m.estimate << "," << m.standard_error << "," << m.tolerance
           << "," << m.lhs << "," << m.rhs << ",\"" << m.comparison << "\","
           << (m.report_only ? "report" : (m.pass ? "pass" : "fail")) << "\n";
    }
    return os.str();
}

std::string ExperimentReport::plot_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "# condiff-plot v1\n";
    provenance_header(os, *this);
    os << "series,x,y\n";
    for (const auto& s : plots)
        for (const auto& [x, y] : s.points) os << s.name << "," << x << "," << y << "\n";
    return os.str();
}

std::string entropy_residual_rows_csv(const ExperimentReport& rep) {
    std::ostringstream os;
    os.precision(12);
    os << "# condiff-residuals v1\n";
    provenance_header(os, rep);
    os << "pair,path,R,tolerance,verdict\n";
    for (const auto& s : rep.plots) {
        if (s.name.rfind("R|", 0) != 0) continue;
        std::string descriptor = s.name.substr(2);
        double tol = 0.0;
        bool pass = true;
        for (const auto& m : rep.metrics)
            if (m.name == descriptor) {
                tol = m.tolerance;
                pass = m.pass;
            }
        for (const auto& [x, y] : s.points)
            os << "\"" << descriptor << "\"," << static_cast<long>(x) << "," << y << ","
               << tol << "," << (pass ? "pass" : "fail") << "\n";
    }
    return os.str();
}

void write_text_file(const std::string& filename, const std::string& content) {
    std::FILE* f = std::fopen(filename.c_str(), "w");
    if (!f) throw config_error("cannot open for writing: " + filename);
    std::fwrite(content.data(), 1, content.size(), f);
    std::fclose(f);
}

} // namespace condiff
