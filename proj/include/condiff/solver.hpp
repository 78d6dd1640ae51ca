#pragma once

#include "condiff/grid.hpp"
#include "condiff/model.hpp"
#include "condiff/noise.hpp"

#include <span>
#include <string>
#include <vector>

namespace condiff {

// Semi-implicit scheme for the Ito form: the degenerate diffusion
// Delta Phi_n(u) is implicit (Newton on the monotone system, tridiagonal in
// 1d, Gauss-Seidel inner solves in 2d); the conservative first-order fluxes
// d_i(a^ij d_j u + b^i + f^i), the source F, and the Euler-Maruyama noise
// sum_k div(sigma^k(x, u)) dW^k (central-difference divergence of the
// composite field) are explicit at the left time point.

struct FieldState {
    std::vector<double> u;
    double t = 0.0;
};

enum class ClippingPolicy { Off, ClipAndReport };

struct SolverConfig {
    double dt = 0.0; // 0: take the noise grid spacing
    int cells = 128; // J per axis
    double newton_tol = 1e-10;
    int newton_max_iter = 25;
    double positivity_tol = 1e-3;
    ClippingPolicy clipping = ClippingPolicy::ClipAndReport;
};

struct StepRecord {
    int newton_iters = 0;
    double mass = 0.0;         // after the step (post clip)
    double min_pre_clip = 0.0; // over the updated field, before clipping
    double max_u = 0.0;
    double clipped_mass = 0.0;
};

// Per-step mass accounting; interior fluxes telescope exactly, so
// d(mass) = boundary_flux + source + noise_div up to roundoff.
struct MassBudget {
    double d_mass = 0.0;       // pre-clip mass change
    double boundary_flux = 0.0; // implicit diffusion + explicit flux, boundary faces
    double source = 0.0;
    double noise_div = 0.0;
    double residual() const { return d_mass - boundary_flux - source - noise_div; }
};

FieldState step(const Grid& grid, const FieldState& state, const CoefficientSet& coeffs,
                std::span<const double> dw, const SolverConfig& cfg,
                StepRecord* record = nullptr, MassBudget* budget = nullptr);

// Discrete analogues of the a priori functionals, accumulated over a run:
// sup_t ||u||_{L2}^2, ||grad [[a_n]](u)||_{L2(D_T)}^2, sup_t ||u||_{m+1}^{m+1}
// and ||grad u||_{L2(D_T)}^2 (the last is allowed to grow with n).
struct NormReport {
    double sup_l2_sq = 0.0;
    double grad_bracket_sq = 0.0;
    double sup_lmp1 = 0.0;
    double grad_u_sq = 0.0;
};

struct Trajectory {
    Grid grid;
    double dt = 0.0;
    long steps = 0;
    int regularization_level = 0;
    std::vector<double> initial; // xi_n on the grid
    std::vector<double> snapshot_times;
    std::vector<FieldState> snapshots; // includes t = 0 and t = T
    std::vector<StepRecord> records;   // one per step
    NormReport norms;
    // (1/gamma-free) integrals int_0^gamma ||u - xi_n||_{L2}^2 dt at
    // gamma = T/64, T/32, T/16
    std::array<double, 3> attainment = {0.0, 0.0, 0.0};
    double total_clipped_mass = 0.0;
    double min_pre_clip = 0.0;

    const FieldState& final_state() const { return snapshots.back(); }
};

struct SnapshotPlan {
    std::vector<double> times; // snapped to the step grid; 0 and T always kept
    bool every_step = false;   // keep the full history (entropy residuals)
};

// Advances one sample path of Pi(Phi_n, xi_n); level 0 runs the raw
// nonlinearity and datum unchanged.  dt equals the noise grid spacing.
Trajectory solve_path(const ProblemSpec& spec, int level, const NoisePath& noise,
                      const SolverConfig& cfg, const SnapshotPlan& plan = {});

NormReport discrete_norms(const Trajectory& traj);

// CSV rows "t,i,u" (1d) or "t,i,j,u" (2d) for the stored snapshots.
void write_trajectory_csv(const Trajectory& traj, const std::string& filename,
                          const std::string& provenance_line = "");

// Raw binary layout following the noise-file convention: little-endian
// uint64 header (snapshot_count, cells_total, dim, cells_per_axis), then per
// snapshot one little-endian double time stamp followed by cells_total
// little-endian doubles.
void write_trajectory_binary(const Trajectory& traj, const std::string& filename);
Trajectory read_trajectory_binary(const std::string& filename);

} // namespace condiff
