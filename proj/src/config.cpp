#include "condiff/config.hpp"
#include "condiff/errors.hpp"
#include "condiff/families.hpp"
#include "condiff/noise.hpp"
#include "condiff/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace condiff {

namespace {

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

using Section = std::map<std::string, Entry>;

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::map<std::string, Section> tokenize(const std::string& text) {
    std::map<std::string, Section> sections;
    std::istringstream is(text);
    std::string line, current;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        std::size_t hash = t.find('#');
        if (hash != std::string::npos) t = trim(t.substr(0, hash));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw parse_error("unterminated section header '" + t + "'", lineno);
            current = trim(t.substr(1, t.size() - 2));
            if (current.empty()) throw parse_error("empty section name", lineno);
            sections[current]; // create
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw parse_error("expected key = value, got '" + t + "'", lineno);
        if (current.empty())
            throw parse_error("key outside any [section]", lineno);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw parse_error("empty key", lineno);
        auto& sec = sections[current];
        auto it = sec.find(key);
        if (it != sec.end())
            throw parse_error("duplicate key '" + key + "' in [" + current + "]", lineno,
                              it->second.line);
        sec[key] = Entry{value, lineno, false};
    }
    return sections;
}

class SectionReader {
public:
    SectionReader(std::map<std::string, Section>& all, const std::string& name)
        : name_(name) {
        auto it = all.find(name);
        if (it != all.end()) sec_ = &it->second;
    }
    bool present() const { return sec_ != nullptr; }

    std::optional<std::string> get(const std::string& key) {
        if (!sec_) return std::nullopt;
        auto it = sec_->find(key);
        if (it == sec_->end()) return std::nullopt;
        it->second.used = true;
        return it->second.value;
    }
    std::string require(const std::string& key, const std::string& context) {
        auto v = get(key);
        if (!v)
            throw domain_error("missing key '" + key + "' (" + context + ") in [" + name_ +
                               "]");
        return *v;
    }
    double number(const std::string& key, double fallback) {
        auto v = get(key);
        if (!v) return fallback;
        return to_number(key, *v);
    }
    double require_number(const std::string& key, const std::string& context) {
        return to_number(key, require(key, context));
    }
    long integer(const std::string& key, long fallback) {
        auto v = get(key);
        if (!v) return fallback;
        return std::lround(to_number(key, *v));
    }
    std::string text(const std::string& key, const std::string& fallback) {
        auto v = get(key);
        return v ? *v : fallback;
    }
    std::vector<double> list(const std::string& key, std::vector<double> fallback) {
        auto v = get(key);
        if (!v) return fallback;
        std::vector<double> out;
        std::istringstream is(*v);
        std::string tok;
        while (std::getline(is, tok, ',')) out.push_back(to_number(key, trim(tok)));
        return out;
    }
    void finish() const {
        if (!sec_) return;
        for (const auto& [key, entry] : *sec_)
            if (!entry.used)
                throw parse_error("unknown key '" + key + "' in [" + name_ + "]", entry.line);
    }

private:
    double to_number(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return x;
        } catch (...) {
            throw domain_error("key '" + key + "' in [" + name_ + "]: cannot parse number '" +
                               v + "'");
        }
    }
    const std::string name_;
    Section* sec_ = nullptr;
};

std::function<double(const Point&)> build_initial(SectionReader& sec, const Box& box,
                                                  const std::string& context) {
    std::string family = sec.require("family", context);
    if (family == "bump") {
        double height = sec.require_number("height", "bump family");
        double center = sec.number("center", 0.5);
        double width = sec.number("width", 0.5);
        return make_initial_bump(box, height, center, width);
    }
    if (family == "sine") return make_initial_sine(box, sec.require_number("height", "sine family"));
    if (family == "constant")
        return make_initial_constant(sec.require_number("value", "constant family"));
    if (family == "ramp") return make_initial_ramp(box, sec.require_number("slope", "ramp family"));
    throw domain_error("unknown initial family '" + family + "'");
}

} // namespace

ParsedConfig parse_config(const std::string& text) {
    auto sections = tokenize(text);
    static const std::vector<std::string> known = {
        "domain", "phi", "noise", "drift", "initial", "solver", "ensemble",
        "contraction", "mollified"};
    for (const auto& [name, sec] : sections) {
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            int line = sec.empty() ? 0 : sec.begin()->second.line;
            throw parse_error("unknown section [" + name + "]", line);
        }
    }

    ParsedConfig out;
    out.config_hash = fnv1a(text);

    SectionReader domain(sections, "domain");
    Box box;
    box.dim = static_cast<int>(domain.integer("dim", 1));
    if (box.dim != 1 && box.dim != 2) throw domain_error("domain dim must be 1 or 2");
    auto lengths = domain.list("lengths", {domain.number("length", 1.0)});
    box.length[0] = lengths.at(0);
    box.length[1] = lengths.size() > 1 ? lengths[1] : lengths[0];
    double T = domain.number("T", 0.25);
    domain.finish();

    SectionReader phi(sections, "phi");
    DiffusionNonlinearity nonlinearity;
    {
        std::string family = phi.text("family", "pme");
        double K = phi.number("K", 2.0);
        if (family == "pme") {
            double m = phi.require_number("m", "pme family");
            nonlinearity = make_pme_phi(m, K);
        } else if (family == "linear") {
            nonlinearity = make_linear_phi(phi.require_number("eps", "linear family"), K);
        } else {
            throw domain_error("unknown phi family '" + family + "'");
        }
        phi.finish();
    }

    SectionReader noise(sections, "noise");
    NoiseField field{box.dim, {}};
    int k_modes = 0;
    {
        std::string family = noise.text("family", "none");
        if (family == "linear-gradient") {
            double c = noise.require_number("c", "linear-gradient family");
            k_modes = static_cast<int>(noise.integer("modes", 1));
            std::string shape = noise.text("shape", "trig");
            field = make_linear_gradient_noise(box, k_modes, c, shape);
        } else if (family != "none") {
            throw domain_error("unknown noise family '" + family + "'");
        }
        noise.finish();
    }

    SectionReader drift(sections, "drift");
    DriftFields drift_fields = make_zero_drift(box.dim);
    {
        std::string family = drift.text("family", "none");
        if (family == "advection-reaction") {
            Vec v = {drift.number("vx", 0.0), drift.number("vy", 0.0)};
            drift_fields =
                make_advection_reaction_drift(box.dim, v, drift.number("lambda", 0.0));
        } else if (family != "none") {
            throw domain_error("unknown drift family '" + family + "'");
        }
        drift.finish();
    }

    SectionReader initial(sections, "initial");
    if (!initial.present()) throw domain_error("missing [initial] section");
    auto xi = build_initial(initial, box, "initial datum");
    initial.finish();

    out.problem.domain = box;
    out.problem.horizon = T;
    out.problem.coeffs = make_coefficient_set(nonlinearity, field, drift_fields);
    out.problem.initial = xi;

    SectionReader solver(sections, "solver");
    SolverConfig scfg;
    scfg.cells = static_cast<int>(solver.integer("cells", 128));
    scfg.newton_tol = solver.number("newton_tol", 1e-10);
    scfg.newton_max_iter = static_cast<int>(solver.integer("newton_max_iter", 25));
    scfg.positivity_tol = solver.number("positivity_tol", 1e-3);
    double dt_factor = solver.number("dt_factor", 0.25);
    {
        std::string clip = solver.text("clipping", "clip");
        if (clip == "clip")
            scfg.clipping = ClippingPolicy::ClipAndReport;
        else if (clip == "off")
            scfg.clipping = ClippingPolicy::Off;
        else
            throw domain_error("clipping must be 'clip' or 'off'");
    }
    solver.finish();

    SectionReader ensemble(sections, "ensemble");
    EnsembleConfig ens;
    ens.paths = static_cast<int>(ensemble.integer("paths", 64));
    ens.seed = static_cast<std::uint64_t>(ensemble.integer("seed", 1));
    ens.confidence = ensemble.number("confidence", 3.0);
    ens.stream_label = ensemble.text("stream", "main");
    ens.workers = static_cast<int>(ensemble.integer("workers", 0));
    auto levels = ensemble.list("levels", {8, 16, 32});
    ens.levels.clear();
    for (double l : levels) ens.levels.push_back(static_cast<int>(l));
    ensemble.finish();
    ens.solver = scfg;
    ens.dt_factor = dt_factor;
    ens.k_modes = k_modes;
    out.ensemble = ens;

    SectionReader contraction(sections, "contraction");
    if (contraction.present()) {
        ProblemSpec tilde = out.problem;
        tilde.initial = build_initial(contraction, box, "contraction datum");
        contraction.finish();
        out.problem_tilde = tilde;
    }

    SectionReader mollified(sections, "mollified");
    if (mollified.present()) {
        out.mollified_epsilons = mollified.list("epsilons", out.mollified_epsilons);
        mollified.finish();
    }
    return out;
}

ParsedConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_config(os.str());
}

const std::vector<std::string>& suite_registry() {
    static const std::vector<std::string> reg = {
        "nonnegativity", "contraction", "cauchy", "apriori",
        "attainment",    "mollified",   "entropy"};
    return reg;
}

int run_manifest(const RunManifest& manifest) {
    if (manifest.suites.empty()) {
        std::fprintf(stderr, "usage error: no suites selected (available:");
        for (const auto& s : suite_registry()) std::fprintf(stderr, " %s", s.c_str());
        std::fprintf(stderr, ")\n");
        return 2;
    }
    for (const auto& s : manifest.suites)
        if (std::find(suite_registry().begin(), suite_registry().end(), s) ==
            suite_registry().end())
            throw config_error("unknown suite '" + s + "'");

    ParsedConfig cfg = parse_config_file(manifest.config_path);
    if (manifest.seed_override) cfg.ensemble.seed = *manifest.seed_override;
    if (manifest.paths_override) cfg.ensemble.paths = *manifest.paths_override;
    if (manifest.cells_override) cfg.ensemble.solver.cells = *manifest.cells_override;

    // fail fast on an unwritable output directory
    const std::string probe = manifest.out_dir + "/.condiff_probe";
    {
        std::FILE* f = std::fopen(probe.c_str(), "w");
        if (!f) throw config_error("output directory not writable: " + manifest.out_dir);
        std::fclose(f);
        std::remove(probe.c_str());
    }

    ValidationReport validation = validate_assumptions(cfg.problem);
    {
        std::ostringstream vh;
        vh << "# config=" << format_hash(cfg.config_hash) << " seed=" << cfg.ensemble.seed
           << "\n";
        write_text_file(manifest.out_dir + "/validation.txt", vh.str() + validation.to_text());
    }

    std::ostringstream prov;
    prov << "condiff 0.1.0\n";
    prov << "config=" << format_hash(cfg.config_hash) << "\n";
    prov << "seed=" << cfg.ensemble.seed << "\n";
    prov << "paths=" << cfg.ensemble.paths << "\n";
    prov << "cells=" << cfg.ensemble.solver.cells << "\n";
    prov << "assumption_validation=" << (validation.all_pass() ? "pass" : "fail") << "\n";

    bool all_pass = true;
    for (const auto& suite : manifest.suites) {
        ExperimentReport rep;
        if (suite == "nonnegativity") {
            rep = run_nonnegativity(cfg.problem, cfg.ensemble);
        } else if (suite == "contraction") {
            if (!cfg.problem_tilde)
                throw config_error("suite 'contraction' needs a [contraction] section");
            rep = run_l1_contraction(cfg.problem, *cfg.problem_tilde, cfg.ensemble);
        } else if (suite == "cauchy") {
            rep = run_cauchy_in_n(cfg.problem, cfg.ensemble.levels, cfg.ensemble);
        } else if (suite == "apriori") {
            rep = run_apriori(cfg.problem, cfg.ensemble);
        } else if (suite == "attainment") {
            rep = run_initial_attainment(cfg.problem, cfg.ensemble);
        } else if (suite == "mollified") {
            auto trajs = sample_endpoint_trajectories(cfg.problem, cfg.ensemble);
            rep = run_mollified_difference(trajs, cfg.mollified_epsilons,
                                           cfg.problem.coeffs.phi);
        } else if (suite == "entropy") {
            rep = run_entropy_battery(cfg.problem, cfg.ensemble);
        }
        rep.prov.config_hash = cfg.config_hash;
        rep.prov.seed = cfg.ensemble.seed;
        if (!validation.all_pass())
            rep.prov.notes = "assumption_validation=fail";
        write_text_file(manifest.out_dir + "/" + suite + ".csv", rep.to_csv());
        if (manifest.plot_data)
            write_text_file(manifest.out_dir + "/" + suite + "_plot.csv", rep.plot_csv());
        if (suite == "entropy")
            write_text_file(manifest.out_dir + "/entropy_residuals.csv",
                            entropy_residual_rows_csv(rep));
        bool ok = rep.pass();
        all_pass = all_pass && ok;
        prov << "suite." << suite << "=" << (ok ? "pass" : "fail") << "\n";
        std::printf("%-14s %s\n", suite.c_str(), ok ? "PASS" : "FAIL");
    }
    write_text_file(manifest.out_dir + "/provenance.txt", prov.str());
    return all_pass ? 0 : 1;
}

} // namespace condiff
