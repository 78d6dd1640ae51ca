// condiff command line: configuration parsing, suite orchestration, and
// trajectory export.

#include "condiff/config.hpp"
#include "condiff/errors.hpp"
#include "condiff/noise.hpp"
#include "condiff/report.hpp"
#include "condiff/solver.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <sstream>

int main(int argc, char** argv) {
    CLI::App app{"condiff: stochastic nonlinear diffusion simulation and property suites"};

    std::string config_path;
    std::string suites_csv;
    std::string out_dir = ".";
    std::string traj_out;
    std::string traj_times;
    std::uint64_t seed = 0;
    int paths = 0;
    int cells = 0;
    bool plot_data = false;

    app.add_option("--config", config_path, "problem configuration file")->required();
    app.add_option("--suites", suites_csv,
                   "comma-separated suites: nonnegativity,contraction,cauchy,apriori,"
                   "attainment,mollified,entropy");
    app.add_option("--out", out_dir, "output directory (default .)");
    auto* seed_opt = app.add_option("--seed", seed, "override the ensemble seed");
    auto* paths_opt = app.add_option("--paths", paths, "override the Monte Carlo path count");
    auto* cells_opt = app.add_option("--cells", cells, "override the cells per axis");
    app.add_flag("--plot-data", plot_data, "also write per-suite plot-data CSV files");
    app.add_option("--traj-out", traj_out,
                   "solve a single path and write snapshots to this CSV instead of "
                   "running suites");
    app.add_option("--traj-times", traj_times,
                   "comma-separated snapshot times for --traj-out (default 0,T/2,T)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!traj_out.empty()) {
            condiff::ParsedConfig cfg = condiff::parse_config_file(config_path);
            if (seed_opt->count()) cfg.ensemble.seed = seed;
            if (cells_opt->count()) cfg.ensemble.solver.cells = cells;
            condiff::Grid grid =
                condiff::make_grid(cfg.problem.domain, cfg.ensemble.solver.cells);
            double h = grid.h[0];
            double dt_target = cfg.ensemble.dt_factor * h * h;
            long steps = std::max<long>(1, std::llround(cfg.problem.horizon / dt_target));
            condiff::NoiseSpec ns{cfg.ensemble.k_modes, steps, cfg.problem.horizon,
                                  cfg.ensemble.seed,
                                  condiff::fnv1a(cfg.ensemble.stream_label + "#0"), 0};
            condiff::SnapshotPlan plan;
            if (traj_times.empty()) {
                plan.times = {0.0, cfg.problem.horizon / 2, cfg.problem.horizon};
            } else {
                std::istringstream is(traj_times);
                std::string tok;
                while (std::getline(is, tok, ',')) plan.times.push_back(std::stod(tok));
            }
            condiff::SolverConfig scfg = cfg.ensemble.solver;
            scfg.dt = 0.0;
            condiff::Trajectory traj = condiff::solve_path(
                cfg.problem, cfg.ensemble.level(), condiff::sample_path(ns), scfg, plan);
            std::ostringstream prov;
            prov << "config=" << condiff::format_hash(cfg.config_hash)
                 << " seed=" << cfg.ensemble.seed << " level=" << cfg.ensemble.level();
            condiff::write_trajectory_csv(traj, traj_out, prov.str());
            std::printf("wrote %s\n", traj_out.c_str());
            return 0;
        }

        condiff::RunManifest manifest;
        manifest.config_path = config_path;
        manifest.out_dir = out_dir;
        manifest.plot_data = plot_data;
        if (seed_opt->count()) manifest.seed_override = seed;
        if (paths_opt->count()) manifest.paths_override = paths;
        if (cells_opt->count()) manifest.cells_override = cells;
        std::istringstream is(suites_csv);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            if (!tok.empty()) manifest.suites.push_back(tok);
        }
        return condiff::run_manifest(manifest);
    } catch (const condiff::parse_error& e) {
        if (e.other_line_number >= 0)
            std::fprintf(stderr, "config error (line %d, earlier line %d): %s\n",
                         e.line_number, e.other_line_number, e.what());
        else
            std::fprintf(stderr, "config error (line %d): %s\n", e.line_number, e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
