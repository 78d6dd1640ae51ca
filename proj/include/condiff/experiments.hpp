#pragma once

#include "condiff/entropy.hpp"
#include "condiff/model.hpp"
#include "condiff/report.hpp"
#include "condiff/solver.hpp"

#include <vector>

namespace condiff {

// Monte Carlo drivers turning the well-posedness statements into statistical
// pass/fail suites.  Every verdict's tolerance sums an explicit statistical
// part (confidence * SE) and an explicit discretization allowance; reports
// are bit-stable across reruns and worker counts (per-path results land in
// indexed slots, reductions run in path order).

struct EnsembleConfig {
    int paths = 64;
    bool coupled = true;
    double confidence = 3.0;
    std::uint64_t seed = 0;
    std::string stream_label = "ensemble";
    SolverConfig solver;          // cells, clipping, tolerances
    double dt_factor = 0.25;      // dt = dt_factor * h^2
    int k_modes = 2;
    std::vector<int> levels = {8, 16, 32}; // regularization ladder
    int workers = 0;              // 0: hardware concurrency

    int level() const { return levels.empty() ? 0 : levels.back(); }
};

// discretization allowance used by the comparison and entropy verdicts
double discretization_allowance(double h, double dt);

// empirical Lipschitz proxy for the drift/reaction (heuristic, reported)
double drift_lipschitz_proxy(const ProblemSpec& spec, double r_max);

ExperimentReport run_nonnegativity(const ProblemSpec& spec, const EnsembleConfig& ens);

// coupled two-run comparison; verdict (a) is the exp(L T) stability bound,
// verdict (b) the comparison principle when xi <= xi_tilde on the grid
ExperimentReport run_l1_contraction(const ProblemSpec& spec, const ProblemSpec& spec_tilde,
                                    const EnsembleConfig& ens);

ExperimentReport run_cauchy_in_n(const ProblemSpec& spec, const std::vector<int>& levels,
                                 const EnsembleConfig& ens);

ExperimentReport run_apriori(const ProblemSpec& spec, const EnsembleConfig& ens);

ExperimentReport run_initial_attainment(const ProblemSpec& spec, const EnsembleConfig& ens);

// endpoint double-mollifier functionals across the epsilon ladder
ExperimentReport run_mollified_difference(const std::vector<Trajectory>& trajectories,
                                          const std::vector<double>& epsilons,
                                          const DiffusionNonlinearity& phi);

// helper producing endpoint trajectories for the mollified-difference suite
std::vector<Trajectory> sample_endpoint_trajectories(const ProblemSpec& spec,
                                                     const EnsembleConfig& ens);

ExperimentReport run_entropy_battery(const ProblemSpec& spec, const EnsembleConfig& ens,
                                     std::vector<EntropyTestPair> battery = {});

} // namespace condiff
