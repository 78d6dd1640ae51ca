#include <doctest.h>

#include "condiff/errors.hpp"
#include "condiff/families.hpp"
#include "condiff/solver.hpp"

#include <cmath>
#include <numbers>

using namespace condiff;

namespace {
constexpr double kPi = std::numbers::pi;

ProblemSpec heat_problem(double eps) {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.1;
    spec.coeffs =
        make_coefficient_set(make_linear_phi(eps, 4.0), NoiseField{1, {}}, make_zero_drift(1));
    spec.initial = make_initial_sine(spec.domain, 1.0);
    return spec;
}

NoisePath silent_path(long steps, double horizon) {
    NoiseSpec ns{0, steps, horizon, 1u, 1u, 0};
    return sample_path(ns);
}

double heat_l1_error(int J, double dt, double eps, double t_end) {
    ProblemSpec spec = heat_problem(eps);
    spec.horizon = t_end;
    SolverConfig cfg;
    cfg.cells = J;
    cfg.clipping = ClippingPolicy::Off;
    cfg.newton_tol = 1e-13;
    Trajectory traj = solve_path(spec, 0, silent_path(std::lround(t_end / dt), t_end), cfg);
    const auto& u = traj.final_state().u;
    double h = traj.grid.h[0];
    double err = 0.0;
    for (int j = 0; j < J; ++j) {
        double x = (j + 0.5) * h;
        err += std::abs(u[j] - std::exp(-eps * kPi * kPi * t_end) * std::sin(kPi * x)) * h;
    }
    return err;
}
} // namespace

TEST_CASE("heat equation reproduces the decaying eigenfunction") {
    // u(t,x) = exp(-eps pi^2 t) sin(pi x); J=256, dt=1e-4, t=0.1
    double err = heat_l1_error(256, 1e-4, 1.0, 0.1);
    CHECK(err <= 1e-3);
}

TEST_CASE("heat equation: observed spatial order >= 0.9 with dt ~ h^2") {
    double e64 = heat_l1_error(64, 1e-4 * 16.0, 1.0, 0.1);
    double e128 = heat_l1_error(128, 1e-4 * 4.0, 1.0, 0.1);
    double e256 = heat_l1_error(256, 1e-4, 1.0, 0.1);
    double order1 = std::log2(e64 / e128);
    double order2 = std::log2(e128 / e256);
    CHECK(order1 >= 0.9);
    CHECK(order2 >= 0.9);
}

TEST_CASE("zero initial datum with clean zero condition stays exactly zero") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.01;
    spec.coeffs = make_coefficient_set(make_pme_phi(2.0, 2.0),
                                       make_linear_gradient_noise(spec.domain, 2, 0.5),
                                       make_zero_drift(1));
    spec.initial = make_initial_constant(0.0);
    NoiseSpec ns{2, 50, spec.horizon, 9u, 2u, 0};
    SolverConfig cfg;
    cfg.cells = 32;
    Trajectory traj = solve_path(spec, 0, sample_path(ns), cfg);
    for (double v : traj.final_state().u) CHECK(v == 0.0);
    for (const auto& rec : traj.records) CHECK(rec.mass == 0.0);
}

TEST_CASE("a zero dW row reduces the step to the deterministic scheme") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.01;
    spec.coeffs = make_coefficient_set(make_pme_phi(2.0, 2.0),
                                       make_linear_gradient_noise(spec.domain, 2, 0.5),
                                       make_zero_drift(1));
    spec.initial = make_initial_bump(spec.domain, 1.0);

    Grid grid = make_grid(spec.domain, 64);
    FieldState state;
    state.t = 0.0;
    state.u.resize(grid.total());
    for (long j = 0; j < grid.total(); ++j) state.u[j] = spec.initial(grid.center(j));

    SolverConfig cfg;
    cfg.dt = 1e-4;
    cfg.cells = 64;

    std::vector<double> zero_dw(2, 0.0);
    FieldState with_zero_noise = step(grid, state, spec.coeffs, zero_dw, cfg);

    // deterministic twin: same coefficients with the noise modes dropped
    CoefficientSet det = make_coefficient_set(spec.coeffs.phi, NoiseField{1, {}},
                                              make_zero_drift(1));
    // keep a, b, f from the noisy set (they are part of the Ito drift)
    det.ito = spec.coeffs.ito;
    FieldState plain = step(grid, state, det, std::span<const double>{}, cfg);
    for (long j = 0; j < grid.total(); ++j)
        CHECK(with_zero_noise.u[j] == doctest::Approx(plain.u[j]).epsilon(1e-15));
}

TEST_CASE("deterministic PME: mass decays monotonically under Dirichlet outflow") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.1;
    spec.coeffs =
        make_coefficient_set(make_pme_phi(2.0, 2.0), NoiseField{1, {}}, make_zero_drift(1));
    spec.initial = make_initial_bump(spec.domain, 1.0);
    SolverConfig cfg;
    cfg.cells = 128;
    cfg.clipping = ClippingPolicy::Off;
    Trajectory traj = solve_path(spec, 8, silent_path(100, spec.horizon), cfg);
    double prev = 1e300;
    for (const auto& rec : traj.records) {
        CHECK(rec.mass <= prev + 1e-12);
        prev = rec.mass;
    }
    // fine-grid oracle: same run at J=2048 also decays monotonically
    SolverConfig fine = cfg;
    fine.cells = 2048;
    Trajectory ftraj = solve_path(spec, 8, silent_path(100, spec.horizon), fine);
    prev = 1e300;
    for (const auto& rec : ftraj.records) {
        CHECK(rec.mass <= prev + 1e-12);
        prev = rec.mass;
    }
}

TEST_CASE("rerun with identical inputs is bit-identical") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.02;
    spec.coeffs = make_coefficient_set(make_pme_phi(2.0, 2.0),
                                       make_linear_gradient_noise(spec.domain, 2, 0.5),
                                       make_zero_drift(1));
    spec.initial = make_initial_bump(spec.domain, 1.0);
    NoiseSpec ns{2, 128, spec.horizon, 1234u, 5u, 0};
    SolverConfig cfg;
    cfg.cells = 64;
    Trajectory a = solve_path(spec, 8, sample_path(ns), cfg);
    Trajectory b = solve_path(spec, 8, sample_path(ns), cfg);
    for (long j = 0; j < a.grid.total(); ++j)
        CHECK(a.final_state().u[j] == b.final_state().u[j]);

    // an uncoupled run (different stream) with the same datum must differ
    NoiseSpec other = ns;
    other.stream = 6u;
    Trajectory c = solve_path(spec, 8, sample_path(other), cfg);
    double diff = 0.0;
    for (long j = 0; j < a.grid.total(); ++j)
        diff += std::abs(a.final_state().u[j] - c.final_state().u[j]);
    CHECK(diff > 0.0);
}

TEST_CASE("conservation accounting telescopes to the boundary") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.01;
    spec.coeffs = make_coefficient_set(make_pme_phi(2.0, 2.0),
                                       make_linear_gradient_noise(spec.domain, 2, 0.5),
                                       make_advection_reaction_drift(1, {0.1, 0.0}, 0.05));
    spec.initial = make_initial_bump(spec.domain, 1.0);
    Grid grid = make_grid(spec.domain, 64);
    FieldState state;
    state.u.resize(grid.total());
    for (long j = 0; j < grid.total(); ++j) state.u[j] = spec.initial(grid.center(j));
    SolverConfig cfg;
    cfg.dt = 1e-4;
    cfg.cells = 64;
    cfg.clipping = ClippingPolicy::Off;
    cfg.positivity_tol = 1.0; // accounting test, not a positivity test
    NoiseSpec ns{2, 100, 0.01, 3u, 3u, 0}; // dt matches cfg.dt
    NoisePath path = sample_path(ns);

    double l1 = 0.0;
    for (long j = 0; j < grid.total(); ++j) l1 += std::abs(state.u[j]) * grid.cell_volume();
    for (int s = 0; s < 20; ++s) {
        MassBudget budget;
        std::vector<double> dw = {path.dw(s, 0), path.dw(s, 1)};
        state = step(grid, state, spec.coeffs, dw, cfg, nullptr, &budget);
        CHECK(std::abs(budget.residual()) <= 1e-10 * std::max(l1, 1.0));
    }
}

TEST_CASE("comparison principle holds exactly for the deterministic monotone scheme") {
    ProblemSpec lo;
    lo.domain = Box{1, {1.0, 1.0}};
    lo.horizon = 0.05;
    lo.coeffs =
        make_coefficient_set(make_pme_phi(2.0, 2.0), NoiseField{1, {}}, make_zero_drift(1));
    lo.initial = make_initial_bump(lo.domain, 0.8);
    ProblemSpec hi = lo;
    hi.initial = make_initial_bump(lo.domain, 1.0);

    SolverConfig cfg;
    cfg.cells = 128;
    cfg.newton_tol = 1e-13;
    cfg.clipping = ClippingPolicy::Off;
    NoisePath path = silent_path(200, lo.horizon);
    Trajectory u = solve_path(lo, 16, path, cfg);
    Trajectory v = solve_path(hi, 16, path, cfg);
    double worst = 0.0;
    for (long j = 0; j < u.grid.total(); ++j)
        worst = std::max(worst, u.final_state().u[j] - v.final_state().u[j]);
    CHECK(worst <= 1e-8);
}

TEST_CASE("discrete norms: zero trajectory and constant-field quadrature convention") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.01;
    spec.coeffs =
        make_coefficient_set(make_pme_phi(2.0, 2.0), NoiseField{1, {}}, make_zero_drift(1));
    spec.initial = make_initial_constant(0.0);
    SolverConfig cfg;
    cfg.cells = 32;
    Trajectory traj = solve_path(spec, 4, silent_path(10, spec.horizon), cfg);
    NormReport n = discrete_norms(traj);
    CHECK(n.sup_l2_sq == 0.0);
    CHECK(n.grad_bracket_sq == 0.0);
    CHECK(n.sup_lmp1 == 0.0);

    // cell-centered full-measure convention: ||c||_{L2}^2 = c^2 |D| exactly
    Grid grid = make_grid(spec.domain, 32);
    double c = 0.7;
    std::vector<double> u(grid.total(), c);
    double l2 = 0.0;
    for (double x : u) l2 += x * x * grid.cell_volume();
    CHECK(l2 == doctest::Approx(c * c * spec.domain.volume()).epsilon(1e-14));
}

TEST_CASE("heat run: sup-in-time L2 norm equals the initial norm") {
    ProblemSpec spec = heat_problem(1.0);
    SolverConfig cfg;
    cfg.cells = 128;
    cfg.clipping = ClippingPolicy::Off;
    Trajectory traj = solve_path(spec, 0, silent_path(100, spec.horizon), cfg);
    // ||sin||_{L2}^2 = 1/2, decaying in time, so the sup sits at t = 0
    CHECK(traj.norms.sup_l2_sq == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("2d heat equation decays like the product eigenfunction") {
    ProblemSpec spec;
    spec.domain = Box{2, {1.0, 1.0}};
    spec.horizon = 0.05;
    spec.coeffs =
        make_coefficient_set(make_linear_phi(1.0, 4.0), NoiseField{2, {}}, make_zero_drift(2));
    spec.initial = make_initial_sine(spec.domain, 1.0);
    SolverConfig cfg;
    cfg.cells = 32;
    cfg.clipping = ClippingPolicy::Off;
    Trajectory traj = solve_path(spec, 0, silent_path(100, spec.horizon), cfg);
    const Grid& g = traj.grid;
    double err = 0.0;
    for (long idx = 0; idx < g.total(); ++idx) {
        Point x = g.center(idx);
        double exact = std::exp(-2.0 * kPi * kPi * spec.horizon) * std::sin(kPi * x[0]) *
                       std::sin(kPi * x[1]);
        err = std::max(err, std::abs(traj.final_state().u[idx] - exact));
    }
    CHECK(err <= 5e-3);
}

TEST_CASE("newton failure reports a step error suggesting dt reduction") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.1;
    spec.coeffs =
        make_coefficient_set(make_pme_phi(2.0, 2.0), NoiseField{1, {}}, make_zero_drift(1));
    spec.initial = make_initial_bump(spec.domain, 1.0);
    Grid grid = make_grid(spec.domain, 64);
    FieldState state;
    state.u.resize(grid.total());
    for (long j = 0; j < grid.total(); ++j) state.u[j] = spec.initial(grid.center(j));
    SolverConfig cfg;
    cfg.dt = 10.0;
    cfg.cells = 64;
    cfg.newton_max_iter = 1; // starve the iteration
    bool threw = false;
    try {
        step(grid, state, spec.coeffs, std::span<const double>{}, cfg);
    } catch (const step_error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("dt") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("trajectory binary round trip follows the noise-file convention") {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.01;
    spec.coeffs =
        make_coefficient_set(make_pme_phi(2.0, 2.0), NoiseField{1, {}}, make_zero_drift(1));
    spec.initial = make_initial_bump(spec.domain, 1.0);
    SolverConfig cfg;
    cfg.cells = 32;
    SnapshotPlan plan;
    plan.times = {0.005};
    Trajectory traj = solve_path(spec, 8, silent_path(20, spec.horizon), cfg, plan);
    const char* fname = "traj_roundtrip.bin";
    write_trajectory_binary(traj, fname);
    Trajectory back = read_trajectory_binary(fname);
    std::remove(fname);
    REQUIRE(back.snapshots.size() == traj.snapshots.size());
    for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
        CHECK(back.snapshot_times[s] == traj.snapshot_times[s]);
        for (std::size_t j = 0; j < traj.snapshots[s].u.size(); ++j)
            CHECK(back.snapshots[s].u[j] == traj.snapshots[s].u[j]);
    }
}
