#include "condiff/solver.hpp"
#include "condiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace condiff {

namespace {

void check_finite_field(const std::vector<double>& u, const Grid& grid, long step,
                        const char* stage) {
    for (std::size_t j = 0; j < u.size(); ++j) {
        if (!std::isfinite(u[j])) {
            Point x = grid.center(static_cast<long>(j));
            std::ostringstream os;
            os << "non-finite value in " << stage << " at step " << step << ", cell " << j
               << " (x=" << x[0] << (grid.dim == 2 ? "," : "") << (grid.dim == 2 ? std::to_string(x[1]) : "")
               << ")";
            throw step_error(os.str(), step, 0.0);
        }
    }
}

// Explicit stage: conservative first-order fluxes, source, and the
// Euler-Maruyama noise divergence.  Returns the updated field (diffusion not
// yet applied) and fills the budget terms that belong to this stage.
std::vector<double> explicit_stage(const Grid& grid, const std::vector<double>& u,
                                   const CoefficientSet& coeffs, double dt,
                                   std::span<const double> dw, MassBudget* budget) {
    const int J = grid.cells_per_axis;
    const int dim = grid.dim;
    GhostView gv{grid, u};
    std::vector<double> v = u;
    double boundary_flux = 0.0, source = 0.0, noise_total = 0.0;

    const auto& ito = coeffs.ito;
    const auto& drift = coeffs.drift;
    const int K = coeffs.noise.k_modes();

    if (dim == 1) {
        const double h = grid.h[0];
        std::vector<double> H(J + 1);
        for (int f = 0; f <= J; ++f) {
            double uL = gv.at(f - 1), uR = gv.at(f);
            double um = 0.5 * (uL + uR);
            Point xf = {f * h, 0.0};
            Mat A = ito.a(xf, um);
            Vec B = ito.b(xf, um);
            Vec Ff = ito.f(xf, um);
            H[f] = A[0][0] * (uR - uL) / h + B[0] + Ff[0];
        }
        for (int j = 0; j < J; ++j) {
            Point xj = grid.center(j);
            double src = drift.F(xj, u[j]);
            v[j] += dt * ((H[j + 1] - H[j]) / h + src);
            source += dt * src * h;
        }
        boundary_flux += dt * (H[J] - H[0]);

        if (K > 0) {
            std::vector<double> s(J);
            for (int k = 0; k < K; ++k) {
                const auto& mode = coeffs.noise.modes[k];
                for (int j = 0; j < J; ++j) s[j] = mode.sigma(grid.center(j), u[j])[0];
                double sfL = mode.sigma({0.0, 0.0}, 0.0)[0];
                double sfR = mode.sigma({grid.length[0], 0.0}, 0.0)[0];
                auto sg = [&](int j) {
                    if (j < 0) return 2.0 * sfL - s[0];
                    if (j >= J) return 2.0 * sfR - s[J - 1];
                    return s[j];
                };
                const double w = dw[k];
                for (int j = 0; j < J; ++j)
                    v[j] += w * (sg(j + 1) - sg(j - 1)) / (2.0 * h);
                noise_total += w * (sg(J) + s[J - 1] - s[0] - sg(-1)) / 2.0;
            }
        }
    } else {
        const double h0 = grid.h[0], h1 = grid.h[1];
        // axis-0 faces
        std::vector<double> H0((J + 1) * J), H1(J * (J + 1));
        for (int j = 0; j < J; ++j) {
            for (int f = 0; f <= J; ++f) {
                double uL = gv.at(f - 1, j), uR = gv.at(f, j);
                double um = 0.5 * (uL + uR);
                Point xf = {f * h0, (j + 0.5) * h1};
                Mat A = ito.a(xf, um);
                Vec B = ito.b(xf, um);
                Vec Ff = ito.f(xf, um);
                double du0 = (uR - uL) / h0;
                double du1 = 0.25 *
                             ((gv.at(f - 1, j + 1) - gv.at(f - 1, j - 1)) +
                              (gv.at(f, j + 1) - gv.at(f, j - 1))) /
                             h1;
                H0[f + (J + 1) * j] = A[0][0] * du0 + A[0][1] * du1 + B[0] + Ff[0];
            }
        }
        for (int i = 0; i < J; ++i) {
            for (int f = 0; f <= J; ++f) {
                double uL = gv.at(i, f - 1), uR = gv.at(i, f);
                double um = 0.5 * (uL + uR);
                Point xf = {(i + 0.5) * h0, f * h1};
                Mat A = ito.a(xf, um);
                Vec B = ito.b(xf, um);
                Vec Ff = ito.f(xf, um);
                double du1 = (uR - uL) / h1;
                double du0 = 0.25 *
                             ((gv.at(i + 1, f - 1) - gv.at(i - 1, f - 1)) +
                              (gv.at(i + 1, f) - gv.at(i - 1, f))) /
                             h0;
                H1[i + J * f] = A[1][0] * du0 + A[1][1] * du1 + B[1] + Ff[1];
            }
        }
        for (int j = 0; j < J; ++j) {
            for (int i = 0; i < J; ++i) {
                Point x = grid.center(grid.index(i, j));
                double src = drift.F(x, u[grid.index(i, j)]);
                double div = (H0[i + 1 + (J + 1) * j] - H0[i + (J + 1) * j]) / h0 +
                             (H1[i + J * (j + 1)] - H1[i + J * j]) / h1;
                v[grid.index(i, j)] += dt * (div + src);
                source += dt * src * h0 * h1;
            }
        }
        for (int j = 0; j < J; ++j)
            boundary_flux += dt * (H0[J + (J + 1) * j] - H0[0 + (J + 1) * j]) * h1;
        for (int i = 0; i < J; ++i)
            boundary_flux += dt * (H1[i + J * J] - H1[i + J * 0]) * h0;

        if (K > 0) {
            std::vector<double> s0(static_cast<std::size_t>(J) * J),
                s1(static_cast<std::size_t>(J) * J);
            for (int k = 0; k < K; ++k) {
                const auto& mode = coeffs.noise.modes[k];
                for (long idx = 0; idx < grid.total(); ++idx) {
                    Vec sv = mode.sigma(grid.center(idx), u[idx]);
                    s0[idx] = sv[0];
                    s1[idx] = sv[1];
                }
                auto sg0 = [&](int i, int j) {
                    if (i < 0) return 2.0 * mode.sigma({0.0, (j + 0.5) * h1}, 0.0)[0] -
                                      s0[grid.index(0, j)];
                    if (i >= J)
                        return 2.0 * mode.sigma({grid.length[0], (j + 0.5) * h1}, 0.0)[0] -
                               s0[grid.index(J - 1, j)];
                    return s0[grid.index(i, j)];
                };
                auto sg1 = [&](int i, int j) {
                    if (j < 0) return 2.0 * mode.sigma({(i + 0.5) * h0, 0.0}, 0.0)[1] -
                                      s1[grid.index(i, 0)];
                    if (j >= J)
                        return 2.0 * mode.sigma({(i + 0.5) * h0, grid.length[1]}, 0.0)[1] -
                               s1[grid.index(i, J - 1)];
                    return s1[grid.index(i, j)];
                };
                const double w = dw[k];
                for (int j = 0; j < J; ++j)
                    for (int i = 0; i < J; ++i)
                        v[grid.index(i, j)] += w * ((sg0(i + 1, j) - sg0(i - 1, j)) / (2 * h0) +
                                                    (sg1(i, j + 1) - sg1(i, j - 1)) / (2 * h1));
                for (int j = 0; j < J; ++j)
                    noise_total +=
                        w * (sg0(J, j) + sg0(J - 1, j) - sg0(0, j) - sg0(-1, j)) / 2.0 * h1 / h0;
                for (int i = 0; i < J; ++i)
                    noise_total +=
                        w * (sg1(i, J) + sg1(i, J - 1) - sg1(i, 0) - sg1(i, -1)) / 2.0 * h0 / h1;
            }
        }
    }

    if (budget) {
        budget->boundary_flux += boundary_flux;
        budget->source += source;
        budget->noise_div += noise_total;
    }
    return v;
}

// Newton solve of w - dt Delta_h Phi(w) = v with the ghost-mirror closure.
// The Jacobian I - dt Delta_h diag(Phi') is an M-matrix whenever Phi' >= 0.
int implicit_diffusion(const Grid& grid, const CoefficientSet& coeffs, double dt,
                       const std::vector<double>& v, std::vector<double>& w,
                       const SolverConfig& cfg, long step, MassBudget* budget) {
    const int J = grid.cells_per_axis;
    const auto& phi = coeffs.phi.phi;
    const auto& afun = coeffs.phi.a;
    auto dphi = [&afun](double r) {
        double a = afun(r);
        return a * a;
    };
    const double tol = cfg.newton_tol * (1.0 + [&] {
                           double m = 0.0;
                           for (double x : v) m = std::max(m, std::abs(x));
                           return m;
                       }());

    w = v;
    const long N = grid.total();
    std::vector<double> resid(N), pv(N);

    auto eval_residual = [&](const std::vector<double>& cand, std::vector<double>& out) {
        GhostView gw{grid, cand};
        double rmax = 0.0;
        if (grid.dim == 1) {
            const double lam = dt / (grid.h[0] * grid.h[0]);
            for (int j = 0; j < J; ++j) {
                double lap = phi(gw.at(j + 1)) + phi(gw.at(j - 1)) - 2.0 * phi(cand[j]);
                out[j] = cand[j] - lam * lap - v[j];
                rmax = std::max(rmax, std::abs(out[j]));
            }
        } else {
            const double lam0 = dt / (grid.h[0] * grid.h[0]);
            const double lam1 = dt / (grid.h[1] * grid.h[1]);
            for (int j = 0; j < J; ++j) {
                for (int i = 0; i < J; ++i) {
                    double pc = phi(cand[grid.index(i, j)]);
                    double lap = lam0 * (phi(gw.at(i + 1, j)) + phi(gw.at(i - 1, j)) - 2 * pc) +
                                 lam1 * (phi(gw.at(i, j + 1)) + phi(gw.at(i, j - 1)) - 2 * pc);
                    long idx = grid.index(i, j);
                    out[idx] = cand[idx] - lap - v[idx];
                    rmax = std::max(rmax, std::abs(out[idx]));
                }
            }
        }
        return rmax;
    };

    double res = eval_residual(w, resid);
    int iters = 0;
    while (res > tol) {
        if (iters >= cfg.newton_max_iter) {
            std::ostringstream os;
            os << "Newton stalled at step " << step << " (residual " << res
               << "); reduce dt";
            throw step_error(os.str(), step, res);
        }
        for (long j = 0; j < N; ++j) pv[j] = dphi(w[j]);

        std::vector<double> delta(N, 0.0);
        if (grid.dim == 1) {
            const double lam = dt / (grid.h[0] * grid.h[0]);
            std::vector<double> dlo(J, 0.0), dmid(J), dhi(J, 0.0), rhs(J);
            for (int j = 0; j < J; ++j) {
                dmid[j] = 1.0 + 2.0 * lam * pv[j];
                if (j > 0) dlo[j] = -lam * pv[j - 1];
                if (j + 1 < J) dhi[j] = -lam * pv[j + 1];
                rhs[j] = -resid[j];
            }
            dmid[0] += lam * dphi(-w[0]);
            dmid[J - 1] += lam * dphi(-w[J - 1]);
            // Thomas
            for (int j = 1; j < J; ++j) {
                double mfac = dlo[j] / dmid[j - 1];
                dmid[j] -= mfac * dhi[j - 1];
                rhs[j] -= mfac * rhs[j - 1];
            }
            delta[J - 1] = rhs[J - 1] / dmid[J - 1];
            for (int j = J - 2; j >= 0; --j)
                delta[j] = (rhs[j] - dhi[j] * delta[j + 1]) / dmid[j];
        } else {
            const double lam0 = dt / (grid.h[0] * grid.h[0]);
            const double lam1 = dt / (grid.h[1] * grid.h[1]);
            std::vector<double> diag(N);
            for (int j = 0; j < J; ++j) {
                for (int i = 0; i < J; ++i) {
                    long idx = grid.index(i, j);
                    double d = 1.0 + 2.0 * (lam0 + lam1) * pv[idx];
                    if (i == 0) d += lam0 * dphi(-w[idx]);
                    if (i == J - 1) d += lam0 * dphi(-w[idx]);
                    if (j == 0) d += lam1 * dphi(-w[idx]);
                    if (j == J - 1) d += lam1 * dphi(-w[idx]);
                    diag[idx] = d;
                }
            }
            // Gauss-Seidel sweeps on the M-matrix; dt <= O(h^2) keeps the
            // iteration strongly contractive at the sizes we run in 2d.
            double inner_tol = std::max(0.05 * tol, 1e-4 * res);
            for (int sweep = 0; sweep < 4000; ++sweep) {
                double worst = 0.0;
                for (int j = 0; j < J; ++j) {
                    for (int i = 0; i < J; ++i) {
                        long idx = grid.index(i, j);
                        double off = 0.0;
                        if (i > 0) off += -lam0 * pv[grid.index(i - 1, j)] * delta[grid.index(i - 1, j)];
                        if (i + 1 < J) off += -lam0 * pv[grid.index(i + 1, j)] * delta[grid.index(i + 1, j)];
                        if (j > 0) off += -lam1 * pv[grid.index(i, j - 1)] * delta[grid.index(i, j - 1)];
                        if (j + 1 < J) off += -lam1 * pv[grid.index(i, j + 1)] * delta[grid.index(i, j + 1)];
                        double nd = (-resid[idx] - off) / diag[idx];
                        worst = std::max(worst, std::abs(nd - delta[idx]));
                        delta[idx] = nd;
                    }
                }
                if (worst <= inner_tol) break;
            }
        }

        // damped update
        double alpha = 1.0;
        std::vector<double> trial(N), trial_res(N);
        double best = res;
        bool accepted = false;
        for (int halving = 0; halving < 9; ++halving) {
            for (long j = 0; j < N; ++j) trial[j] = w[j] + alpha * delta[j];
            double tr = eval_residual(trial, trial_res);
            if (tr < best) {
                w.swap(trial);
                resid.swap(trial_res);
                res = tr;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        ++iters;
        if (!accepted) {
            std::ostringstream os;
            os << "Newton line search failed at step " << step << " (residual " << res
               << "); reduce dt";
            throw step_error(os.str(), step, res);
        }
    }

    if (budget) {
        // telescoped boundary value of dt * sum_j Delta_h Phi(w_j) h^d
        GhostView gw{grid, w};
        if (grid.dim == 1) {
            double lo = phi(w[0]) - phi(gw.at(-1));
            double hi = phi(gw.at(J)) - phi(w[J - 1]);
            budget->boundary_flux += dt / grid.h[0] * (hi - lo);
        } else {
            double acc = 0.0;
            for (int j = 0; j < J; ++j) {
                double lo = phi(w[grid.index(0, j)]) - phi(gw.at(-1, j));
                double hi = phi(gw.at(J, j)) - phi(w[grid.index(J - 1, j)]);
                acc += (hi - lo) / grid.h[0] * grid.h[1];
            }
            for (int i = 0; i < J; ++i) {
                double lo = phi(w[grid.index(i, 0)]) - phi(gw.at(i, -1));
                double hi = phi(gw.at(i, J)) - phi(w[grid.index(i, J - 1)]);
                acc += (hi - lo) / grid.h[1] * grid.h[0];
            }
            budget->boundary_flux += dt * acc;
        }
    }
    return iters;
}

} // namespace

FieldState step(const Grid& grid, const FieldState& state, const CoefficientSet& coeffs,
                std::span<const double> dw, const SolverConfig& cfg, StepRecord* record,
                MassBudget* budget) {
    if (static_cast<int>(dw.size()) != coeffs.noise.k_modes())
        throw config_error("step: dW row size does not match K_modes");
    const double dt = cfg.dt;
    if (!(dt > 0.0)) throw config_error("step: dt must be positive");
    const double vol = grid.cell_volume();

    const long stepidx = static_cast<long>(std::llround(state.t / dt));
    std::vector<double> v = explicit_stage(grid, state.u, coeffs, dt, dw, budget);
    check_finite_field(v, grid, stepidx, "explicit stage");

    FieldState next;
    next.t = state.t + dt;
    int iters = implicit_diffusion(grid, coeffs, dt, v, next.u, cfg, stepidx, budget);
    check_finite_field(next.u, grid, stepidx, "implicit stage");

    if (budget) {
        double m0 = 0.0, m1 = 0.0;
        for (double x : state.u) m0 += x;
        for (double x : next.u) m1 += x;
        budget->d_mass += (m1 - m0) * vol;
    }

    double min_pre = next.u[0], maxu = next.u[0];
    for (double x : next.u) {
        min_pre = std::min(min_pre, x);
        maxu = std::max(maxu, x);
    }
    double clipped = 0.0;
    if (cfg.clipping == ClippingPolicy::ClipAndReport) {
        for (auto& x : next.u) {
            if (x < 0.0) {
                clipped -= x * vol;
                x = 0.0;
            }
        }
    } else if (min_pre < -cfg.positivity_tol) {
        std::ostringstream os;
        os << "negative value " << min_pre << " beyond positivity_tol at step " << stepidx;
        throw step_error(os.str(), stepidx, min_pre);
    }

    if (record) {
        record->newton_iters = iters;
        record->min_pre_clip = min_pre;
        record->max_u = maxu;
        record->clipped_mass = clipped;
        double m = 0.0;
        for (double x : next.u) m += x;
        record->mass = m * vol;
    }
    return next;
}

namespace {

struct BracketEval {
    std::function<double(double)> fn;
};

BracketEval make_bracket_eval(const DiffusionNonlinearity& phi, double rmax_hint) {
    if (phi.bracket_a) return {phi.bracket_a};
    // cumulative trapezoid table of a on a generous range, linear beyond
    double span = std::max(4.0 * rmax_hint, 8.0);
    const int n = 16384;
    auto r0 = -span;
    auto dr = 2.0 * span / n;
    auto vals = std::make_shared<std::vector<double>>(n + 1);
    std::vector<double> av(n + 1);
    for (int i = 0; i <= n; ++i) av[i] = phi.a(r0 + i * dr);
    int zero_idx = n / 2;
    (*vals)[zero_idx] = 0.0;
    for (int i = zero_idx; i < n; ++i)
        (*vals)[i + 1] = (*vals)[i] + 0.5 * dr * (av[i] + av[i + 1]);
    for (int i = zero_idx; i > 0; --i)
        (*vals)[i - 1] = (*vals)[i] - 0.5 * dr * (av[i] + av[i - 1]);
    double aleft = av.front(), aright = av.back();
    return {[vals, r0, dr, n, aleft, aright](double r) {
        double s = (r - r0) / dr;
        if (s <= 0.0) return vals->front() + (r - r0) * aleft;
        if (s >= n) return vals->back() + (r - (r0 + n * dr)) * aright;
        int i = static_cast<int>(s);
        double t = s - i;
        return (*vals)[i] * (1 - t) + (*vals)[i + 1] * t;
    }};
}

} // namespace

Trajectory solve_path(const ProblemSpec& spec, int level, const NoisePath& noise,
                      const SolverConfig& cfg, const SnapshotPlan& plan) {
    if (noise.k_modes != spec.coeffs.noise.k_modes())
        throw config_error("solve_path: noise path K_modes does not match the problem");
    const double dt = noise.steps > 0 ? noise.dt() : cfg.dt;
    if (!(dt > 0.0)) throw config_error("solve_path: no usable dt");
    if (cfg.dt > 0.0 && std::abs(cfg.dt - dt) > 1e-12 * dt)
        throw config_error("solve_path: cfg.dt must equal the noise grid spacing");

    CoefficientSet coeffs = spec.coeffs;
    std::function<double(const Point&)> xi = spec.initial;
    if (level >= 1) {
        coeffs.phi = regularize_phi(spec.coeffs.phi, level);
        xi = truncate_initial(spec.initial, level);
    }

    Grid grid = make_grid(spec.domain, cfg.cells);
    SolverConfig lcfg = cfg;
    lcfg.dt = dt;

    Trajectory traj;
    traj.grid = grid;
    traj.dt = dt;
    traj.steps = noise.steps;
    traj.regularization_level = level;
    traj.initial.resize(grid.total());
    for (long j = 0; j < grid.total(); ++j) traj.initial[j] = xi(grid.center(j));
    for (double x : traj.initial)
        if (x < 0.0) throw domain_error("solve_path: initial datum is negative");

    const double T = noise.horizon > 0 ? noise.horizon : dt * noise.steps;
    std::vector<long> snap_steps;
    if (plan.every_step) {
        for (long s = 0; s <= noise.steps; ++s) snap_steps.push_back(s);
    } else {
        snap_steps.push_back(0);
        for (double t : plan.times) {
            long s = std::llround(t / dt);
            if (s > 0 && s < noise.steps) snap_steps.push_back(s);
        }
        snap_steps.push_back(noise.steps);
        std::sort(snap_steps.begin(), snap_steps.end());
        snap_steps.erase(std::unique(snap_steps.begin(), snap_steps.end()), snap_steps.end());
    }

    BracketEval bracket = make_bracket_eval(
        coeffs.phi, *std::max_element(traj.initial.begin(), traj.initial.end()) + 1.0);

    const double vol = grid.cell_volume();
    const double m = coeffs.phi.m;
    const int J = grid.cells_per_axis;

    auto accumulate_state_norms = [&](const std::vector<double>& u) {
        double l2 = 0.0, lmp1 = 0.0;
        for (double x : u) {
            l2 += x * x;
            lmp1 += std::pow(std::abs(x), m + 1.0);
        }
        traj.norms.sup_l2_sq = std::max(traj.norms.sup_l2_sq, l2 * vol);
        traj.norms.sup_lmp1 = std::max(traj.norms.sup_lmp1, lmp1 * vol);
    };
    auto accumulate_gradients = [&](const std::vector<double>& u) {
        GhostView gv{grid, u};
        double gb = 0.0, gu = 0.0;
        if (grid.dim == 1) {
            const double h2 = 2.0 * grid.h[0];
            for (int j = 0; j < J; ++j) {
                double bl = j > 0 ? bracket.fn(u[j - 1]) : -bracket.fn(u[0]);
                double br = j + 1 < J ? bracket.fn(u[j + 1]) : -bracket.fn(u[J - 1]);
                double gbr = (br - bl) / h2;
                double gur = (gv.at(j + 1) - gv.at(j - 1)) / h2;
                gb += gbr * gbr;
                gu += gur * gur;
            }
        } else {
            for (int j = 0; j < J; ++j) {
                for (int i = 0; i < J; ++i) {
                    for (int ax = 0; ax < 2; ++ax) {
                        int ip = i + (ax == 0), im = i - (ax == 0);
                        int jp = j + (ax == 1), jm = j - (ax == 1);
                        double up = gv.at(ip, jp), um = gv.at(im, jm);
                        auto bval = [&](int ii, int jj) {
                            double sign = 1.0;
                            if (ii < 0) { ii = 0; sign = -1.0; }
                            if (ii >= J) { ii = J - 1; sign = -1.0; }
                            if (jj < 0) { jj = 0; sign = -sign; }
                            if (jj >= J) { jj = J - 1; sign = -sign; }
                            return sign * bracket.fn(u[grid.index(ii, jj)]);
                        };
                        double gbr = (bval(ip, jp) - bval(im, jm)) / (2.0 * grid.h[ax]);
                        double gur = (up - um) / (2.0 * grid.h[ax]);
                        gb += gbr * gbr;
                        gu += gur * gur;
                    }
                }
            }
        }
        traj.norms.grad_bracket_sq += gb * vol * dt;
        traj.norms.grad_u_sq += gu * vol * dt;
    };

    FieldState state{traj.initial, 0.0};
    accumulate_state_norms(state.u);

    std::size_t next_snap = 0;
    auto maybe_snapshot = [&](long s) {
        if (next_snap < snap_steps.size() && snap_steps[next_snap] == s) {
            traj.snapshot_times.push_back(s * dt);
            traj.snapshots.push_back(state);
            ++next_snap;
        }
    };
    maybe_snapshot(0);

    const std::array<double, 3> gammas = {T / 64.0, T / 32.0, T / 16.0};
    traj.records.resize(noise.steps);
    traj.min_pre_clip = 0.0;

    for (long s = 0; s < noise.steps; ++s) {
        accumulate_gradients(state.u);
        // attainment integrand at the left point
        double t_left = s * dt;
        double diff2 = 0.0;
        if (t_left < gammas[2]) {
            for (long j = 0; j < grid.total(); ++j) {
                double d = state.u[j] - traj.initial[j];
                diff2 += d * d;
            }
            diff2 *= vol;
            for (int gi = 0; gi < 3; ++gi)
                if (t_left < gammas[gi]) traj.attainment[gi] += dt * diff2;
        }

        std::span<const double> dw(noise.increments.data() + s * noise.k_modes,
                                   static_cast<std::size_t>(noise.k_modes));
        state = step(grid, state, coeffs, dw, lcfg, &traj.records[s], nullptr);
        traj.total_clipped_mass += traj.records[s].clipped_mass;
        traj.min_pre_clip = std::min(traj.min_pre_clip, traj.records[s].min_pre_clip);
        accumulate_state_norms(state.u);
        maybe_snapshot(s + 1);
    }
    return traj;
}

NormReport discrete_norms(const Trajectory& traj) { return traj.norms; }

namespace {

void put_u64(std::FILE* f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    std::fwrite(b, 1, 8, f);
}

void put_f64(std::FILE* f, double x) {
    std::uint64_t v;
    std::memcpy(&v, &x, 8);
    put_u64(f, v);
}

std::uint64_t get_u64(std::FILE* f, const std::string& name) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8) {
        std::fclose(f);
        throw config_error("truncated trajectory file " + name);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::FILE* f, const std::string& name) {
    std::uint64_t v = get_u64(f, name);
    double x;
    std::memcpy(&x, &v, 8);
    return x;
}

} // namespace

void write_trajectory_binary(const Trajectory& traj, const std::string& filename) {
    std::FILE* f = std::fopen(filename.c_str(), "wb");
    if (!f) throw config_error("write_trajectory_binary: cannot open " + filename);
    put_u64(f, traj.snapshots.size());
    put_u64(f, static_cast<std::uint64_t>(traj.grid.total()));
    put_u64(f, static_cast<std::uint64_t>(traj.grid.dim));
    put_u64(f, static_cast<std::uint64_t>(traj.grid.cells_per_axis));
    for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
        put_f64(f, traj.snapshot_times[s]);
        for (double x : traj.snapshots[s].u) put_f64(f, x);
    }
    std::fclose(f);
}

Trajectory read_trajectory_binary(const std::string& filename) {
    std::FILE* f = std::fopen(filename.c_str(), "rb");
    if (!f) throw config_error("read_trajectory_binary: cannot open " + filename);
    Trajectory traj;
    std::uint64_t count = get_u64(f, filename);
    std::uint64_t total = get_u64(f, filename);
    traj.grid.dim = static_cast<int>(get_u64(f, filename));
    traj.grid.cells_per_axis = static_cast<int>(get_u64(f, filename));
    traj.grid.length = {1.0, 1.0};
    traj.grid.h[0] = 1.0 / traj.grid.cells_per_axis;
    traj.grid.h[1] = traj.grid.dim == 2 ? 1.0 / traj.grid.cells_per_axis : 0.0;
    for (std::uint64_t s = 0; s < count; ++s) {
        FieldState state;
        state.t = get_f64(f, filename);
        state.u.resize(total);
        for (auto& x : state.u) x = get_f64(f, filename);
        traj.snapshot_times.push_back(state.t);
        traj.snapshots.push_back(std::move(state));
    }
    std::fclose(f);
    return traj;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& filename,
                          const std::string& provenance_line) {
    std::FILE* f = std::fopen(filename.c_str(), "w");
    if (!f) throw config_error("write_trajectory_csv: cannot open " + filename);
    if (!provenance_line.empty()) std::fprintf(f, "# %s\n", provenance_line.c_str());
    const int J = traj.grid.cells_per_axis;
    if (traj.grid.dim == 1) {
        std::fprintf(f, "t,i,u\n");
        for (std::size_t s = 0; s < traj.snapshots.size(); ++s)
            for (int i = 0; i < J; ++i)
                std::fprintf(f, "%.17g,%d,%.17g\n", traj.snapshot_times[s], i,
                             traj.snapshots[s].u[i]);
    } else {
        std::fprintf(f, "t,i,j,u\n");
        for (std::size_t s = 0; s < traj.snapshots.size(); ++s)
            for (int j = 0; j < J; ++j)
                for (int i = 0; i < J; ++i)
                    std::fprintf(f, "%.17g,%d,%d,%.17g\n", traj.snapshot_times[s], i, j,
                                 traj.snapshots[s].u[traj.grid.index(i, j)]);
    }
    std::fclose(f);
}

} // namespace condiff
