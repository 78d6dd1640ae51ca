#include "condiff/experiments.hpp"
#include "condiff/errors.hpp"
#include "condiff/noise.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace condiff {

double discretization_allowance(double h, double dt) { return 5.0 * (h + std::sqrt(dt)); }

double drift_lipschitz_proxy(const ProblemSpec& spec, double r_max) {
    double L = 0.0;
    const int nx = 17, nr = 33;
    for (int i = 0; i <= nx; ++i) {
        Point x = {spec.domain.length[0] * i / nx, 0.0};
        for (int j2 = 0; j2 <= (spec.domain.dim == 2 ? nx : 0); ++j2) {
            if (spec.domain.dim == 2) x[1] = spec.domain.length[1] * j2 / nx;
            for (int k = 0; k <= nr; ++k) {
                double r = r_max * k / nr;
                double fr = std::abs(spec.coeffs.drift.F_r(x, r));
                double frd = std::abs(spec.coeffs.ito.f_r_div(x, r));
                L = std::max(L, fr + frd);
            }
        }
    }
    return L;
}

namespace {

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
};

MeanSE mean_se(const std::vector<double>& xs) {
    MeanSE out;
    const std::size_t n = xs.size();
    if (n == 0) return out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(n);
    if (n >= 2) {
        double v = 0.0;
        for (double x : xs) v += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(v / (static_cast<double>(n) * (static_cast<double>(n) - 1)));
    }
    return out;
}

void parallel_paths(int paths, int workers, const std::function<void(int)>& fn) {
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, paths));
    if (workers == 1) {
        for (int p = 0; p < paths; ++p) fn(p);
        return;
    }
    std::mutex mu;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (int p = w; p < paths; p += workers) {
                try {
                    fn(p);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t path_stream(const std::string& label, int p) {
    return fnv1a(label + "#" + std::to_string(p));
}

// problem with the regularization baked in, so path solves skip the
// per-call reconstruction of Phi_n
struct PreparedRun {
    ProblemSpec spec;   // phi replaced by Phi_n, initial truncated
    Grid grid;
    double dt = 0.0;
    long steps = 0;
    std::vector<double> u0;
    double l1_u0 = 0.0;
    double max_u0 = 0.0;
};

PreparedRun prepare(const ProblemSpec& spec, const EnsembleConfig& ens, int level) {
    PreparedRun out;
    out.spec = spec;
    if (level >= 1) {
        out.spec.coeffs.phi = regularize_phi(spec.coeffs.phi, level);
        out.spec.initial = truncate_initial(spec.initial, level);
    }
    out.grid = make_grid(spec.domain, ens.solver.cells);
    double h = out.grid.h[0];
    double dt_target = ens.dt_factor * h * h;
    out.steps = std::max<long>(1, std::llround(spec.horizon / dt_target));
    out.dt = spec.horizon / static_cast<double>(out.steps);
    out.u0.resize(out.grid.total());
    for (long j = 0; j < out.grid.total(); ++j) out.u0[j] = out.spec.initial(out.grid.center(j));
    for (double v : out.u0) {
        out.l1_u0 += std::abs(v) * out.grid.cell_volume();
        out.max_u0 = std::max(out.max_u0, v);
    }
    return out;
}

NoisePath path_noise(const PreparedRun& run, const EnsembleConfig& ens, int p,
                     const std::string& role = "") {
    NoiseSpec ns;
    ns.k_modes = ens.k_modes;
    ns.steps = run.steps;
    ns.horizon = run.spec.horizon;
    ns.seed = ens.seed;
    ns.stream = path_stream(ens.stream_label + role, p);
    return sample_path(ns);
}

Provenance make_prov(const EnsembleConfig& ens) {
    Provenance prov;
    prov.seed = ens.seed;
    prov.paths = ens.paths;
    prov.cells = ens.solver.cells;
    prov.k_modes = ens.k_modes;
    prov.levels = ens.levels;
    return prov;
}

double positive_part_l1(const Grid& grid, const std::vector<double>& a,
                        const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += std::max(a[j] - b[j], 0.0);
    return s * grid.cell_volume();
}

} // namespace

// ------------------------------------------------------------ nonnegativity

ExperimentReport run_nonnegativity(const ProblemSpec& spec, const EnsembleConfig& ens) {
    if (ens.paths < 2) throw config_error("nonnegativity: need >= 2 paths for a verdict");
    PreparedRun run = prepare(spec, ens, ens.level());
    SolverConfig cfg = ens.solver;
    cfg.dt = 0.0;

    std::vector<double> clip_frac(ens.paths), min_pre(ens.paths);
    parallel_paths(ens.paths, ens.workers, [&](int p) {
        NoisePath noise = path_noise(run, ens, p);
        Trajectory traj = solve_path(run.spec, 0, noise, cfg);
        clip_frac[p] = run.l1_u0 > 0 ? traj.total_clipped_mass / run.l1_u0 : 0.0;
        min_pre[p] = traj.min_pre_clip;
    });

    ExperimentReport rep;
    rep.suite = "nonnegativity";
    rep.prov = make_prov(ens);

    double worst_frac = 0.0, mean_frac = 0.0, worst_min = 0.0;
    for (int p = 0; p < ens.paths; ++p) {
        worst_frac = std::max(worst_frac, clip_frac[p]);
        mean_frac += clip_frac[p] / ens.paths;
        worst_min = std::min(worst_min, min_pre[p]);
    }
    rep.metrics.push_back({"clipped_mass_fraction_worst_path", worst_frac, 0.0, 1e-3,
                           worst_frac, 1e-3, "max_p clipped/||xi||_1 <= 1e-3",
                           worst_frac <= 1e-3, false});
    rep.metrics.push_back({"clipped_mass_fraction_mean", mean_frac, 0.0, 1e-3, mean_frac,
                           1e-3, "mean clipped/||xi||_1 <= 1e-3", mean_frac <= 1e-3, false});
    double floor = -10.0 * ens.solver.positivity_tol;
    rep.metrics.push_back({"min_pre_clip", worst_min, 0.0, -floor, worst_min, floor,
                           "min_p min_x u_pre_clip >= -10 positivity_tol", worst_min >= floor,
                           false});
    PlotSeries s{"clip_fraction_by_path", {}};
    for (int p = 0; p < ens.paths; ++p) s.points.push_back({static_cast<double>(p), clip_frac[p]});
    rep.plots.push_back(std::move(s));
    return rep;
}

// -------------------------------------------------------------- contraction

ExperimentReport run_l1_contraction(const ProblemSpec& spec, const ProblemSpec& spec_tilde,
                                    const EnsembleConfig& ens) {
    if (!ens.coupled) throw config_error("l1_contraction: ensemble must be coupled");
    if (ens.paths < 2) throw config_error("l1_contraction: need >= 2 paths");
    PreparedRun run = prepare(spec, ens, ens.level());
    PreparedRun run_t = prepare(spec_tilde, ens, ens.level());
    SolverConfig cfg = ens.solver;
    cfg.dt = 0.0;

    const double T = spec.horizon;
    std::vector<double> times = {0.0, 0.25 * T, 0.5 * T, 0.75 * T, T};
    SnapshotPlan plan;
    plan.times = times;

    const std::size_t nt = times.size();
    std::vector<std::vector<double>> e(nt, std::vector<double>(ens.paths, 0.0));
    parallel_paths(ens.paths, ens.workers, [&](int p) {
        NoisePath noise = path_noise(run, ens, p); // same stream drives both runs
        Trajectory u = solve_path(run.spec, 0, noise, cfg, plan);
        Trajectory v = solve_path(run_t.spec, 0, noise, cfg, plan);
        for (std::size_t i = 0; i < nt && i < u.snapshots.size(); ++i)
            e[i][p] = positive_part_l1(u.grid, u.snapshots[i].u, v.snapshots[i].u);
    });

    ExperimentReport rep;
    rep.suite = "l1_contraction";
    rep.prov = make_prov(ens);

    std::vector<MeanSE> stats(nt);
    for (std::size_t i = 0; i < nt; ++i) stats[i] = mean_se(e[i]);
    double h = run.grid.h[0];
    double allow = discretization_allowance(h, run.dt) * run_t.l1_u0;
    double L = drift_lipschitz_proxy(spec, 2.0 * run_t.max_u0 + 1.0);

    // (a) stability bound with the heuristic exp(L T) proxy
    {
        double lhs = stats.back().mean;
        double rhs = std::exp(L * T) * stats.front().mean + ens.confidence * stats.back().se +
                     allow;
        std::ostringstream cmp;
        cmp << "e(T) <= exp(L T) e(0) + " << ens.confidence
            << " SE + allow (L=" << L << " heuristic proxy)";
        rep.metrics.push_back({"stability_bound", lhs, stats.back().se,
                               rhs - std::exp(L * T) * stats.front().mean, lhs, rhs,
                               cmp.str(), lhs <= rhs, false});
    }

    // (b) comparison principle when the data are ordered on the grid
    bool ordered = true;
    for (std::size_t j = 0; j < run.u0.size(); ++j)
        if (run.u0[j] > run_t.u0[j] + 1e-14) ordered = false;
    if (ordered) {
        double worst = -1e300;
        std::size_t worst_i = 0;
        for (std::size_t i = 0; i < nt; ++i) {
            double centered = stats[i].mean - ens.confidence * stats[i].se;
            if (centered > worst) {
                worst = centered;
                worst_i = i;
            }
        }
        rep.metrics.push_back({"comparison_principle", stats[worst_i].mean,
                               stats[worst_i].se, allow + ens.confidence * stats[worst_i].se,
                               worst, allow,
                               "max_t [e(t) - conf SE] <= 5(h+sqrt(dt)) ||xi_tilde||_1",
                               worst <= allow, false});
    }
    rep.metrics.push_back({"drift_lipschitz_proxy", L, 0.0, 0.0, L, 0.0,
                           "empirical sup |F_r| + |d_r div f| (heuristic)", true, true});

    PlotSeries se_mean{"e_mean", {}}, se_se{"e_se", {}};
    for (std::size_t i = 0; i < nt; ++i) {
        se_mean.points.push_back({times[i], stats[i].mean});
        se_se.points.push_back({times[i], stats[i].se});
    }
    rep.plots.push_back(std::move(se_mean));
    rep.plots.push_back(std::move(se_se));
    return rep;
}

// ------------------------------------------------------------- cauchy in n

ExperimentReport run_cauchy_in_n(const ProblemSpec& spec, const std::vector<int>& levels,
                                 const EnsembleConfig& ens) {
    if (levels.size() < 3) throw config_error("cauchy_in_n: need at least 3 levels");
    if (ens.paths < 2) throw config_error("cauchy_in_n: need >= 2 paths");
    std::vector<PreparedRun> runs;
    runs.reserve(levels.size());
    for (int n : levels) runs.push_back(prepare(spec, ens, n));
    SolverConfig cfg = ens.solver;
    cfg.dt = 0.0;

    const std::size_t nl = levels.size();
    std::vector<std::vector<double>> dists(nl - 1, std::vector<double>(ens.paths, 0.0));
    // per-level apriori functionals
    std::vector<std::vector<double>> sup_l2(nl, std::vector<double>(ens.paths)),
        grad_br(nl, std::vector<double>(ens.paths)), sup_m1(nl, std::vector<double>(ens.paths)),
        grad_u(nl, std::vector<double>(ens.paths));

    parallel_paths(ens.paths, ens.workers, [&](int p) {
        NoisePath noise = path_noise(runs[0], ens, p); // shared across levels
        std::vector<std::vector<double>> finals(nl);
        for (std::size_t k = 0; k < nl; ++k) {
            Trajectory traj = solve_path(runs[k].spec, 0, noise, cfg);
            finals[k] = traj.final_state().u;
            sup_l2[k][p] = traj.norms.sup_l2_sq;
            grad_br[k][p] = traj.norms.grad_bracket_sq;
            sup_m1[k][p] = traj.norms.sup_lmp1;
            grad_u[k][p] = traj.norms.grad_u_sq;
        }
        for (std::size_t k = 0; k + 1 < nl; ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < finals[k].size(); ++j)
                d += std::abs(finals[k][j] - finals[k + 1][j]);
            dists[k][p] = d * runs[0].grid.cell_volume();
        }
    });

    ExperimentReport rep;
    rep.suite = "cauchy_in_n";
    rep.prov = make_prov(ens);
    rep.prov.levels = levels;

    std::vector<MeanSE> D(nl - 1);
    for (std::size_t k = 0; k + 1 < nl; ++k) D[k] = mean_se(dists[k]);
    for (std::size_t k = 0; k + 1 < nl; ++k) {
        std::ostringstream nm;
        nm << "D_" << levels[k] << "_" << levels[k + 1];
        rep.metrics.push_back({nm.str(), D[k].mean, D[k].se, 0.0, D[k].mean, 0.0,
                               "mean L1 endpoint distance", true, true});
    }
    for (std::size_t k = 0; k + 2 < nl; ++k) {
        double pool = std::sqrt(D[k].se * D[k].se + D[k + 1].se * D[k + 1].se);
        double lhs = D[k + 1].mean - D[k].mean;
        std::ostringstream nm, cmp;
        nm << "cauchy_decrease_" << levels[k + 1];
        cmp << "D(" << levels[k + 1] << "," << levels[k + 2] << ") < D(" << levels[k] << ","
            << levels[k + 1] << ") within 1 SE";
        rep.metrics.push_back(
            {nm.str(), lhs, pool, pool, lhs, pool, cmp.str(), lhs <= pool, false});
    }
    // n-uniform a priori functionals (ratio across levels <= 4)
    auto ratio_metric = [&](const char* name, std::vector<std::vector<double>>& data,
                            bool verdict) {
        double lo = 1e300, hi = 0.0;
        for (std::size_t k = 0; k < nl; ++k) {
            MeanSE st = mean_se(data[k]);
            std::ostringstream nm;
            nm << name << "_n" << levels[k];
            rep.metrics.push_back({nm.str(), st.mean, st.se, 0.0, st.mean, 0.0,
                                   "a priori functional", true, true});
            lo = std::min(lo, st.mean);
            hi = std::max(hi, st.mean);
        }
        if (verdict) {
            bool ok = hi <= 4.0 * std::max(lo, 1e-30) || hi <= 1e-14;
            std::ostringstream nm;
            nm << name << "_ratio";
            rep.metrics.push_back({nm.str(), lo > 0 ? hi / lo : 0.0, 0.0, 4.0, hi,
                                   4.0 * std::max(lo, 1e-30), "max/min across levels <= 4",
                                   ok, false});
        }
    };
    ratio_metric("sup_l2_sq", sup_l2, true);
    ratio_metric("grad_bracket_sq", grad_br, true);
    ratio_metric("sup_lmp1", sup_m1, true);
    ratio_metric("grad_u_sq", grad_u, false); // allowed to grow with n

    PlotSeries sd{"D_by_level", {}};
    for (std::size_t k = 0; k + 1 < nl; ++k)
        sd.points.push_back({static_cast<double>(levels[k]), D[k].mean});
    rep.plots.push_back(std::move(sd));
    return rep;
}

// ----------------------------------------------------------------- apriori

ExperimentReport run_apriori(const ProblemSpec& spec, const EnsembleConfig& ens) {
    ExperimentReport rep = run_cauchy_in_n(spec, ens.levels, ens);
    rep.suite = "apriori";
    // keep only the a priori metrics
    std::vector<MetricResult> kept;
    for (auto& m : rep.metrics)
        if (m.name.rfind("sup_", 0) == 0 || m.name.rfind("grad_", 0) == 0)
            kept.push_back(std::move(m));
    rep.metrics = std::move(kept);
    rep.plots.clear();
    return rep;
}

// -------------------------------------------------------------- attainment

ExperimentReport run_initial_attainment(const ProblemSpec& spec, const EnsembleConfig& ens) {
    if (ens.paths < 2) throw config_error("initial_attainment: need >= 2 paths");
    PreparedRun run = prepare(spec, ens, ens.level());
    SolverConfig cfg = ens.solver;
    cfg.dt = 0.0;

    const double T = spec.horizon;
    std::array<double, 3> gammas = {T / 64.0, T / 32.0, T / 16.0};
    std::vector<std::vector<double>> g(3, std::vector<double>(ens.paths, 0.0));
    parallel_paths(ens.paths, ens.workers, [&](int p) {
        NoisePath noise = path_noise(run, ens, p);
        Trajectory traj = solve_path(run.spec, 0, noise, cfg);
        for (int i = 0; i < 3; ++i) g[i][p] = traj.attainment[i] / gammas[i];
    });

    ExperimentReport rep;
    rep.suite = "initial_attainment";
    rep.prov = make_prov(ens);
    std::array<MeanSE, 3> st;
    for (int i = 0; i < 3; ++i) st[i] = mean_se(g[i]);
    const char* names[3] = {"g_T64", "g_T32", "g_T16"};
    for (int i = 0; i < 3; ++i)
        rep.metrics.push_back({names[i], st[i].mean, st[i].se, 0.0, st[i].mean, 0.0,
                               "(1/gamma) int_0^gamma ||u - xi||_L2^2", true, true});
    auto dec = [&](int a, int b, const char* nm) {
        double pool = std::sqrt(st[a].se * st[a].se + st[b].se * st[b].se);
        double lhs = st[a].mean - st[b].mean;
        rep.metrics.push_back({nm, lhs, pool, pool, lhs, pool,
                               "g at smaller gamma <= g at larger gamma within 1 SE",
                               lhs <= pool, false});
    };
    dec(0, 1, "g_decrease_64_32");
    dec(1, 2, "g_decrease_32_16");
    dec(0, 2, "g_decrease_64_16");
    PlotSeries s{"g_of_gamma", {}};
    for (int i = 0; i < 3; ++i) s.points.push_back({gammas[i], st[i].mean});
    rep.plots.push_back(std::move(s));
    return rep;
}

// ------------------------------------------------------ mollified difference

std::vector<Trajectory> sample_endpoint_trajectories(const ProblemSpec& spec,
                                                     const EnsembleConfig& ens) {
    PreparedRun run = prepare(spec, ens, ens.level());
    SolverConfig cfg = ens.solver;
    cfg.dt = 0.0;
    std::vector<Trajectory> out(ens.paths);
    parallel_paths(ens.paths, ens.workers, [&](int p) {
        NoisePath noise = path_noise(run, ens, p);
        out[p] = solve_path(run.spec, 0, noise, cfg);
    });
    return out;
}

ExperimentReport run_mollified_difference(const std::vector<Trajectory>& trajectories,
                                          const std::vector<double>& epsilons,
                                          const DiffusionNonlinearity& phi) {
    if (trajectories.empty()) throw config_error("mollified_difference: no trajectories");
    if (epsilons.size() < 2) throw config_error("mollified_difference: need >= 2 epsilons");
    const Grid& grid = trajectories.front().grid;
    if (grid.dim != 1)
        throw config_error("mollified_difference: implemented for 1d trajectories");
    const int J = grid.cells_per_axis;
    const double h = grid.h[0];

    auto functional = [&](const std::vector<double>& u, double eps, bool phi_version) {
        ShiftedMollifier kern{1, eps, {0.0, 0.0}};
        auto sup = kern.support_axis(0);
        int lo = static_cast<int>(std::ceil(sup[0] / h - 0.5));
        int hi = static_cast<int>(std::floor(sup[1] / h + 0.5));
        double acc = 0.0;
        for (int j = 0; j < J; ++j) {
            double uj = phi_version ? phi.phi(u[j]) : u[j];
            for (int d = lo; d <= hi; ++d) {
                int l = j - d;
                if (l < 0 || l >= J) continue;
                double w = kern.value({d * h, 0.0});
                if (w == 0.0) continue;
                double ul = phi_version ? phi.phi(u[l]) : u[l];
                acc += std::abs(uj - ul) * w * h * h;
            }
        }
        return acc;
    };

    const std::size_t ne = epsilons.size();
    const std::size_t np = trajectories.size();
    std::vector<std::vector<double>> Fu(ne, std::vector<double>(np)),
        Fp(ne, std::vector<double>(np));
    for (std::size_t p = 0; p < np; ++p) {
        const auto& u = trajectories[p].final_state().u;
        for (std::size_t i = 0; i < ne; ++i) {
            Fu[i][p] = functional(u, epsilons[i], false);
            Fp[i][p] = functional(u, epsilons[i], true);
        }
    }

    auto fit_slope = [&](const std::vector<double>& ys) {
        // least squares on (log eps, log y)
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (std::size_t i = 0; i < ne; ++i) {
            if (ys[i] <= 0.0) continue;
            double lx = std::log(epsilons[i]), ly = std::log(ys[i]);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++n;
        }
        if (n < 2) return 0.0;
        return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    };

    std::vector<double> mean_u(ne), mean_p(ne);
    for (std::size_t i = 0; i < ne; ++i) {
        mean_u[i] = mean_se(Fu[i]).mean;
        mean_p[i] = mean_se(Fp[i]).mean;
    }
    std::vector<double> slopes_u(np);
    for (std::size_t p = 0; p < np; ++p) {
        std::vector<double> ys(ne);
        for (std::size_t i = 0; i < ne; ++i) ys[i] = Fu[i][p];
        slopes_u[p] = fit_slope(ys);
    }
    MeanSE slope_stat = mean_se(slopes_u);
    double slope_mean_curve = fit_slope(mean_u);
    double slope_phi = fit_slope(mean_p);

    ExperimentReport rep;
    rep.suite = "mollified_difference";
    rep.prov.paths = static_cast<int>(np);
    rep.prov.cells = J;
    const double m = phi.m;
    double bound = 0.8 / (m + 1.0);
    rep.metrics.push_back({"slope_u", slope_mean_curve, slope_stat.se, bound,
                           slope_mean_curve, bound,
                           "log-log slope of E int |u(x)-u(y)| rho_eps >= 0.8/(m+1)",
                           slope_mean_curve >= bound, false});
    rep.metrics.push_back({"slope_phi", slope_phi, 0.0, 0.0, slope_phi, 0.0,
                           "log-log slope of the Phi-difference functional", true, true});
    PlotSeries su{"F_u", {}}, sp{"F_phi", {}};
    for (std::size_t i = 0; i < ne; ++i) {
        su.points.push_back({epsilons[i], mean_u[i]});
        sp.points.push_back({epsilons[i], mean_p[i]});
    }
    rep.plots.push_back(std::move(su));
    rep.plots.push_back(std::move(sp));
    return rep;
}

// ---------------------------------------------------------- entropy battery

ExperimentReport run_entropy_battery(const ProblemSpec& spec, const EnsembleConfig& ens,
                                     std::vector<EntropyTestPair> battery) {
    PreparedRun run = prepare(spec, ens, ens.level());
    SolverConfig cfg = ens.solver;
    cfg.dt = 0.0;

    PartitionOfUnity pu = build_partition(spec.domain, 0.25);
    if (battery.empty()) battery = default_battery(pu, spec.horizon, run.max_u0);
    ResidualBattery rb(run.spec.coeffs, run.grid, battery, -0.5, 2.0 * run.max_u0 + 1.0);

    SnapshotPlan plan;
    plan.every_step = true;
    const std::size_t npairs = battery.size();
    std::vector<std::vector<double>> R(npairs, std::vector<double>(ens.paths, 0.0));
    parallel_paths(ens.paths, ens.workers, [&](int p) {
        NoisePath noise = path_noise(run, ens, p);
        Trajectory traj = solve_path(run.spec, 0, noise, cfg, plan);
        std::vector<double> rs = rb.evaluate(traj, noise);
        for (std::size_t i = 0; i < npairs; ++i) R[i][p] = rs[i];
    });

    ExperimentReport rep;
    rep.suite = "entropy_battery";
    rep.prov = make_prov(ens);
    double allow = discretization_allowance(run.grid.h[0], run.dt);
    double worst_centered = 1e300;
    for (std::size_t i = 0; i < npairs; ++i) {
        MeanSE st = mean_se(R[i]);
        double tol = ens.confidence * st.se + allow;
        bool ok = st.mean >= -tol;
        rep.metrics.push_back({battery[i].descriptor, st.mean, st.se, tol, st.mean, -tol,
                               "mean R >= -(conf SE + allowance)", ok, false});
        worst_centered = std::min(worst_centered, st.mean + tol);
        PlotSeries detail{"R|" + battery[i].descriptor, {}};
        for (int p = 0; p < ens.paths; ++p)
            detail.points.push_back({static_cast<double>(p), R[i][p]});
        rep.plots.push_back(std::move(detail));
    }
    rep.metrics.push_back({"allowance", allow, 0.0, 0.0, allow, 0.0,
                           "5 (h + sqrt(dt)) discretization allowance", true, true});
    return rep;
}

} // namespace condiff
