#pragma once

#include "condiff/model.hpp"
#include "condiff/noise.hpp"
#include "condiff/solver.hpp"

#include <functional>
#include <string>
#include <vector>

namespace condiff {

// Entropy pairs and boundary-adapted test functions, and the discrete
// residual of the entropy inequality evaluated on trajectories.

// ------------------------------------------------------------------ eta
// Smoothed positive-part entropy: eta_delta(0) = eta_delta'(0) = 0 with
// eta_delta'' = rho_delta, applied to (r - z) or (z - r).
enum class Orientation { PlusAboveShift, PlusBelowShift };

struct EntropyFunction {
    double delta = 0.1;
    double shift = 0.0; // z
    Orientation orient = Orientation::PlusAboveShift;

    double eta(double r) const;
    double eta_p(double r) const;
    double eta_pp(double r) const;
    // class E0 membership (eta'(0) = 0): above-shift needs z >= 0,
    // below-shift needs z <= 0
    bool in_E0() const;
    std::string descriptor() const;
};

EntropyFunction make_eta(double delta, double z, Orientation orient);

// ------------------------------------------------------------- cutoffs
enum class CutoffKind { InteriorCompact, ClosureSmooth };

struct SpatialCutoff {
    CutoffKind kind = CutoffKind::InteriorCompact;
    std::function<double(const Point&)> value;
    std::function<Vec(const Point&)> grad;
    std::function<Mat(const Point&)> hess;
    std::string name;
};

// Time profile in C_c^infty([0,T)).
struct TimeProfile {
    std::function<double(double)> value;
    std::function<double(double)> deriv;
    std::string name;
};
std::vector<TimeProfile> default_time_profiles(double T);

// --------------------------------------------------- partition of unity
// Per-axis smooth profiles low / mid / high built from the reference step;
// tensor products give 3 members in 1d and 9 in 2d.  Boundary members carry
// inward kernel shifts for their mollifiers; the interior member's support
// keeps a strip/2 margin from the boundary.
struct PartitionMember {
    std::array<int, 2> side = {0, 0}; // -1 low, 0 mid, +1 high per axis
    Vec kernel_shift = {0.0, 0.0};    // mollifier shift in units of eps
    std::string name;
    bool interior() const { return side[0] == 0 && side[1] == 0; }
};

struct PartitionOfUnity {
    Box domain;
    double overlap = 0.25;
    std::array<double, 2> strip = {0.0, 0.0}; // w per axis
    double eps_bar = 0.0;
    double K_tilde = 0.0;
    std::vector<PartitionMember> members;

    double value(int member, const Point& x) const;
    Vec grad(int member, const Point& x) const;
    Mat hess(int member, const Point& x) const;
    SpatialCutoff cutoff(int member) const;
};

PartitionOfUnity build_partition(const Box& box, double overlap);

// Shifted product mollifier rho_{eps,i}; support sits inside a ball of
// radius K_tilde * eps and the y-window of x - rho_{eps,i}(x - .) stays in
// the domain for x in the member's support and eps < eps_bar.
struct ShiftedMollifier {
    int dim = 1;
    double eps = 0.1;
    Vec kernel_shift = {0.0, 0.0};
    double value(const Vec& z) const;
    // support interval of z along one axis
    std::array<double, 2> support_axis(int axis) const;
};
ShiftedMollifier member_mollifier(const PartitionOfUnity& pu, int member, double eps);

// ----------------------------------------------------------- test pairs
struct EntropyTestPair {
    EntropyFunction eta;
    TimeProfile time;
    SpatialCutoff space;
    std::string descriptor;
};

bool pair_admissible(const EntropyTestPair& pair);

// Default battery: delta in {0.05, 0.2}, z in {0} + quartiles of the datum
// range, both orientations where admissible, all partition members, all
// default time profiles.
std::vector<EntropyTestPair> default_battery(const PartitionOfUnity& pu, double T,
                                             double xi_max);

// ------------------------------------------------------------ residual
// R = RHS - LHS of the discretized entropy inequality; positive R is the
// expected sign for solutions.  Conventions: midpoint sums in space on the
// solver grid; the test function enters through the scheme's discrete
// difference stencils; parabolic terms and the eta time slab are read at
// each slab's right (implicit) state while all dW-paired terms stay at the
// left (Ito) state; |grad [[a]](u)|^2 by central differences of cell
// values; inner [[.]] integrals from nodewise Gauss-Legendre cumulative
// tables validated against the adaptive integrator.  Requires an
// every-step trajectory.
class ResidualBattery {
public:
    ResidualBattery(const CoefficientSet& coeffs, const Grid& grid,
                    std::vector<EntropyTestPair> pairs, double r_lo, double r_hi);
    std::vector<double> evaluate(const Trajectory& traj, const NoisePath& noise) const;
    const std::vector<EntropyTestPair>& pairs() const { return pairs_; }

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
    std::vector<EntropyTestPair> pairs_;
};

double entropy_residual(const Trajectory& traj, const NoisePath& noise,
                        const EntropyTestPair& pair, const CoefficientSet& coeffs);

// L2(D_T) norm of the discrete mismatch between d_x [[a f]](u) and
// f(u) d_x [[a]](u) over interior cells (the Dirichlet ghost layer is
// excluded so constants behave as the definition treats them).
double check_chain_rule(const Trajectory& traj, const std::function<double(double)>& f,
                        const CoefficientSet& coeffs);

} // namespace condiff
