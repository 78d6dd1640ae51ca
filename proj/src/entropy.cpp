#include "condiff/entropy.hpp"
#include "condiff/errors.hpp"
#include "condiff/mollifier.hpp"
#include "condiff/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace condiff {

// ------------------------------------------------------------------ eta

double EntropyFunction::eta(double r) const {
    double s = orient == Orientation::PlusAboveShift ? r - shift : shift - r;
    return delta * mollifier_eta2(s / delta);
}

double EntropyFunction::eta_p(double r) const {
    if (orient == Orientation::PlusAboveShift) return mollifier_cdf((r - shift) / delta);
    return -mollifier_cdf((shift - r) / delta);
}

double EntropyFunction::eta_pp(double r) const {
    double s = orient == Orientation::PlusAboveShift ? r - shift : shift - r;
    return mollifier(s / delta) / delta;
}

bool EntropyFunction::in_E0() const {
    return orient == Orientation::PlusAboveShift ? shift >= 0.0 : shift <= 0.0;
}

std::string EntropyFunction::descriptor() const {
    std::ostringstream os;
    os << "delta=" << delta << "|z=" << shift
       << "|orient=" << (orient == Orientation::PlusAboveShift ? "+" : "-");
    return os.str();
}

EntropyFunction make_eta(double delta, double z, Orientation orient) {
    if (!(delta > 0.0)) throw domain_error("make_eta: delta must be positive");
    return EntropyFunction{delta, z, orient};
}

// --------------------------------------------------------- time profiles

std::vector<TimeProfile> default_time_profiles(double T) {
    TimeProfile plateau{
        [T](double t) { return 1.0 - smooth_step((t - 0.5 * T) / (0.3 * T)); },
        [T](double t) { return -smooth_step_prime((t - 0.5 * T) / (0.3 * T)) / (0.3 * T); },
        "plateau"};
    TimeProfile interior{
        [T](double t) {
            return smooth_step((t - 0.2 * T) / (0.2 * T)) *
                   (1.0 - smooth_step((t - 0.6 * T) / (0.2 * T)));
        },
        [T](double t) {
            double a = smooth_step((t - 0.2 * T) / (0.2 * T));
            double b = 1.0 - smooth_step((t - 0.6 * T) / (0.2 * T));
            double da = smooth_step_prime((t - 0.2 * T) / (0.2 * T)) / (0.2 * T);
            double db = -smooth_step_prime((t - 0.6 * T) / (0.2 * T)) / (0.2 * T);
            return da * b + a * db;
        },
        "interior"};
    TimeProfile early{[T](double t) { return 1.0 - smooth_step(t / (0.4 * T)); },
                      [T](double t) { return -smooth_step_prime(t / (0.4 * T)) / (0.4 * T); },
                      "early"};
    return {plateau, interior, early};
}

// ---------------------------------------------------- partition of unity

namespace {

struct AxisProfile {
    double v, d1, d2;
};

AxisProfile axis_profile(int side, double x, double L, double w) {
    auto low = [&](double xx) {
        double t = (xx - 0.5 * w) / (0.5 * w);
        return AxisProfile{1.0 - smooth_step(t), -smooth_step_prime(t) * 2.0 / w,
                           -smooth_step_second(t) * 4.0 / (w * w)};
    };
    auto high = [&](double xx) {
        double t = ((L - xx) - 0.5 * w) / (0.5 * w);
        return AxisProfile{1.0 - smooth_step(t), smooth_step_prime(t) * 2.0 / w,
                           -smooth_step_second(t) * 4.0 / (w * w)};
    };
    if (side == -1) return low(x);
    if (side == +1) return high(x);
    AxisProfile lo = low(x), hi = high(x);
    return {1.0 - lo.v - hi.v, -lo.d1 - hi.d1, -lo.d2 - hi.d2};
}

} // namespace

double PartitionOfUnity::value(int member, const Point& x) const {
    const auto& m = members[member];
    double v = axis_profile(m.side[0], x[0], domain.length[0], strip[0]).v;
    if (domain.dim == 2) v *= axis_profile(m.side[1], x[1], domain.length[1], strip[1]).v;
    return v;
}

Vec PartitionOfUnity::grad(int member, const Point& x) const {
    const auto& m = members[member];
    AxisProfile p0 = axis_profile(m.side[0], x[0], domain.length[0], strip[0]);
    if (domain.dim == 1) return {p0.d1, 0.0};
    AxisProfile p1 = axis_profile(m.side[1], x[1], domain.length[1], strip[1]);
    return {p0.d1 * p1.v, p0.v * p1.d1};
}

Mat PartitionOfUnity::hess(int member, const Point& x) const {
    const auto& m = members[member];
    AxisProfile p0 = axis_profile(m.side[0], x[0], domain.length[0], strip[0]);
    Mat out = zero_mat();
    if (domain.dim == 1) {
        out[0][0] = p0.d2;
        return out;
    }
    AxisProfile p1 = axis_profile(m.side[1], x[1], domain.length[1], strip[1]);
    out[0][0] = p0.d2 * p1.v;
    out[1][1] = p0.v * p1.d2;
    out[0][1] = out[1][0] = p0.d1 * p1.d1;
    return out;
}

SpatialCutoff PartitionOfUnity::cutoff(int member) const {
    PartitionOfUnity copy = *this;
    SpatialCutoff c;
    c.kind = members[member].interior() ? CutoffKind::InteriorCompact
                                        : CutoffKind::ClosureSmooth;
    c.name = members[member].name;
    c.value = [copy, member](const Point& x) { return copy.value(member, x); };
    c.grad = [copy, member](const Point& x) { return copy.grad(member, x); };
    c.hess = [copy, member](const Point& x) { return copy.hess(member, x); };
    return c;
}

PartitionOfUnity build_partition(const Box& box, double overlap) {
    if (!(overlap > 0.0) || !(overlap < 0.5))
        throw domain_error("build_partition: overlap must lie in (0, 1/2)");
    PartitionOfUnity pu;
    pu.domain = box;
    pu.overlap = overlap;
    pu.strip[0] = overlap * box.length[0];
    pu.strip[1] = box.dim == 2 ? overlap * box.length[1] : 0.0;
    pu.eps_bar = pu.strip[0] / 3.0;
    if (box.dim == 2) pu.eps_bar = std::min(pu.eps_bar, pu.strip[1] / 3.0);

    auto shift_for = [](int side) { return side == -1 ? -2.5 : 0.0; };
    auto name_for = [](int side) {
        return side == -1 ? std::string("low") : side == 0 ? std::string("mid")
                                                           : std::string("high");
    };
    if (box.dim == 1) {
        for (int s : {-1, 0, +1}) {
            PartitionMember m;
            m.side = {s, 0};
            m.kernel_shift = {shift_for(s), 0.0};
            m.name = s == -1 ? "left" : s == 0 ? "interior" : "right";
            pu.members.push_back(m);
        }
    } else {
        for (int s1 : {-1, 0, +1}) {
            for (int s0 : {-1, 0, +1}) {
                PartitionMember m;
                m.side = {s0, s1};
                m.kernel_shift = {shift_for(s0), shift_for(s1)};
                m.name = s0 == 0 && s1 == 0 ? "interior"
                                            : "x-" + name_for(s0) + "|y-" + name_for(s1);
                pu.members.push_back(m);
            }
        }
    }
    double reach = 1.5;
    for (const auto& m : pu.members)
        for (int ax = 0; ax < box.dim; ++ax)
            reach = std::max({reach, std::abs(0.5 + m.kernel_shift[ax]),
                              std::abs(1.5 + m.kernel_shift[ax])});
    pu.K_tilde = reach * std::sqrt(static_cast<double>(box.dim));
    return pu;
}

double ShiftedMollifier::value(const Vec& z) const {
    double v = 1.0;
    for (int i = 0; i < dim; ++i) v *= mollifier(z[i] / eps - 0.5 - kernel_shift[i]) / eps;
    return v;
}

std::array<double, 2> ShiftedMollifier::support_axis(int axis) const {
    return {eps * (0.5 + kernel_shift[axis]), eps * (1.5 + kernel_shift[axis])};
}

ShiftedMollifier member_mollifier(const PartitionOfUnity& pu, int member, double eps) {
    ShiftedMollifier sm;
    sm.dim = pu.domain.dim;
    sm.eps = eps;
    sm.kernel_shift = pu.members[member].kernel_shift;
    return sm;
}

// ------------------------------------------------------------ test pairs

bool pair_admissible(const EntropyTestPair& pair) {
    if (pair.space.kind == CutoffKind::ClosureSmooth && !pair.eta.in_E0()) return false;
    return true;
}

std::vector<EntropyTestPair> default_battery(const PartitionOfUnity& pu, double T,
                                             double xi_max) {
    std::vector<EntropyTestPair> out;
    const std::vector<double> deltas = {0.05, 0.2};
    const std::vector<double> zs = {0.0, 0.25 * xi_max, 0.5 * xi_max, 0.75 * xi_max};
    auto profiles = default_time_profiles(T);
    for (std::size_t mi = 0; mi < pu.members.size(); ++mi) {
        SpatialCutoff cut = pu.cutoff(static_cast<int>(mi));
        for (double d : deltas) {
            for (double z : zs) {
                for (Orientation o :
                     {Orientation::PlusAboveShift, Orientation::PlusBelowShift}) {
                    // the below-shift family enters at z = 0 only: with
                    // non-negative data its positive shifts duplicate the
                    // above-shift tests and negative shifts are vacuous
                    if (o == Orientation::PlusBelowShift && z > 0.0) continue;
                    EntropyFunction eta = make_eta(d, z, o);
                    EntropyTestPair probe{eta, profiles[0], cut, ""};
                    if (!pair_admissible(probe)) continue;
                    for (const auto& tp : profiles) {
                        EntropyTestPair p{eta, tp, cut, ""};
                        std::ostringstream os;
                        os << eta.descriptor() << "|member=" << cut.name
                           << "|profile=" << tp.name;
                        p.descriptor = os.str();
                        out.push_back(std::move(p));
                    }
                }
            }
        }
    }
    return out;
}

// -------------------------------------------------------------- residual

namespace {

// 5-point Gauss-Legendre on [0,1]
const double kGlX[5] = {0.04691007703066800, 0.23076534494715845, 0.5,
                        0.76923465505284155, 0.95308992296933200};
const double kGlW[5] = {0.11846344252809454, 0.23931433524968324, 0.28444444444444444,
                        0.23931433524968324, 0.11846344252809454};

inline double hermite(double t, double f0, double f1, double d0, double d1, double h) {
    double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f0 + h * (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * f1 +
           h * (t3 - t2) * d1;
}

} // namespace

struct ResidualBattery::Impl {
    Grid grid;
    CoefficientSet coeffs;
    int dim = 1;
    int K = 0;
    int acomp = 1; // stored symmetric components of a: 1 in 1d, 3 in 2d

    double r0 = 0.0, dr = 0.0;
    long nodes = 0;
    long zero_node = 0;

    // integrand samples: subnode layout [j * intervals * 5 + i * 5 + q],
    // node layout [j * nodes + i]; the a^2 kind is x-independent
    std::vector<double> asq_sub, asq_node;
    std::vector<std::vector<double>> a_sub, a_node;
    std::vector<std::vector<double>> adivfr_sub, adivfr_node;
    std::vector<double> frx_sub, frx_node;
    std::vector<std::vector<double>> sr_sub, sr_node;
    std::vector<std::vector<double>> srx_sub, srx_node;

    std::function<double(double)> bracket_a;

    double node_r(long i) const { return r0 + dr * static_cast<double>(i); }

    Impl(const CoefficientSet& cs, const Grid& g, double r_lo, double r_hi)
        : grid(g), coeffs(cs) {
        dim = grid.dim;
        K = coeffs.noise.k_modes();
        acomp = dim == 1 ? 1 : 3;
        const long J = grid.total();

        double span = std::max(r_hi - r_lo, 0.5);
        long intervals = std::max<long>(64, static_cast<long>(std::ceil(span / 2.5e-3)));
        intervals = std::min<long>(intervals, 4096);
        dr = span / static_cast<double>(intervals);
        long below = static_cast<long>(std::ceil(std::max(0.0, -r_lo) / dr));
        r0 = -static_cast<double>(below) * dr;
        intervals = static_cast<long>(std::ceil((r_hi - r0) / dr));
        nodes = intervals + 1;
        zero_node = below;

        auto sub_r = [&](long i, int q) { return node_r(i) + dr * kGlX[q]; };

        asq_sub.resize(static_cast<std::size_t>(intervals) * 5);
        asq_node.resize(nodes);
        for (long i = 0; i < intervals; ++i)
            for (int q = 0; q < 5; ++q) {
                double a = coeffs.phi.a(sub_r(i, q));
                asq_sub[i * 5 + q] = a * a;
            }
        for (long i = 0; i < nodes; ++i) {
            double a = coeffs.phi.a(node_r(i));
            asq_node[i] = a * a;
        }

        auto alloc = [&](std::vector<std::vector<double>>& sub,
                         std::vector<std::vector<double>>& nod, int count) {
            sub.assign(count,
                       std::vector<double>(static_cast<std::size_t>(J) * intervals * 5));
            nod.assign(count, std::vector<double>(static_cast<std::size_t>(J) * nodes));
        };
        alloc(a_sub, a_node, acomp);
        alloc(adivfr_sub, adivfr_node, dim);
        alloc(sr_sub, sr_node, std::max(K * dim, 1));
        alloc(srx_sub, srx_node, std::max(K, 1));
        frx_sub.resize(static_cast<std::size_t>(J) * intervals * 5);
        frx_node.resize(static_cast<std::size_t>(J) * nodes);

        for (long j = 0; j < J; ++j) {
            Point x = grid.center(j);
            auto fill = [&](double r, std::size_t sub_idx, std::size_t node_idx, bool node) {
                Mat A = coeffs.ito.a(x, r);
                Vec adiv = coeffs.ito.a_div(x, r);
                Vec fr = coeffs.ito.f_r(x, r);
                double frx = coeffs.ito.f_r_div(x, r);
                auto put = [&](std::vector<double>& vs, std::vector<double>& vn, double v) {
                    if (node)
                        vn[node_idx] = v;
                    else
                        vs[sub_idx] = v;
                };
                put(a_sub[0], a_node[0], A[0][0]);
                if (acomp == 3) {
                    put(a_sub[1], a_node[1], A[0][1]);
                    put(a_sub[2], a_node[2], A[1][1]);
                }
                for (int i = 0; i < dim; ++i)
                    put(adivfr_sub[i], adivfr_node[i], adiv[i] - fr[i]);
                put(frx_sub, frx_node, frx);
                for (int k = 0; k < K; ++k) {
                    Vec sr = coeffs.noise.modes[k].sigma_r(x, r);
                    double srx = coeffs.noise.modes[k].div_sigma_r(x, r);
                    for (int i = 0; i < dim; ++i)
                        put(sr_sub[k * dim + i], sr_node[k * dim + i], sr[i]);
                    put(srx_sub[k], srx_node[k], srx);
                }
            };
            for (long i = 0; i < intervals; ++i)
                for (int q = 0; q < 5; ++q)
                    fill(sub_r(i, q), (static_cast<std::size_t>(j) * intervals + i) * 5 + q, 0,
                         false);
            for (long i = 0; i < nodes; ++i)
                fill(node_r(i), 0, static_cast<std::size_t>(j) * nodes + i, true);
        }

        if (coeffs.phi.bracket_a) {
            bracket_a = coeffs.phi.bracket_a;
        } else {
            auto vals = std::make_shared<std::vector<double>>(nodes, 0.0);
            for (long i = zero_node; i + 1 < nodes; ++i) {
                double s = 0.0;
                for (int q = 0; q < 5; ++q) s += kGlW[q] * coeffs.phi.a(sub_r(i, q));
                (*vals)[i + 1] = (*vals)[i] + dr * s;
            }
            for (long i = zero_node; i > 0; --i) {
                double s = 0.0;
                for (int q = 0; q < 5; ++q) s += kGlW[q] * coeffs.phi.a(sub_r(i - 1, q));
                (*vals)[i - 1] = (*vals)[i] - dr * s;
            }
            double lr0 = r0, ldr = dr;
            long ln = nodes;
            auto afun = coeffs.phi.a;
            bracket_a = [vals, lr0, ldr, ln, afun](double r) {
                double s = (r - lr0) / ldr;
                if (s <= 0.0) return vals->front() + (r - lr0) * afun(lr0);
                double rmax = lr0 + ldr * static_cast<double>(ln - 1);
                if (s >= static_cast<double>(ln - 1))
                    return vals->back() + (r - rmax) * afun(rmax);
                long i = static_cast<long>(s);
                double t = s - static_cast<double>(i);
                return (*vals)[i] * (1 - t) + (*vals)[i + 1] * t;
            };
        }
    }
};

ResidualBattery::ResidualBattery(const CoefficientSet& coeffs, const Grid& grid,
                                 std::vector<EntropyTestPair> pairs, double r_lo,
                                 double r_hi)
    : pairs_(std::move(pairs)) {
    for (const auto& p : pairs_)
        if (!pair_admissible(p))
            throw domain_error("entropy pair " + p.descriptor +
                               ": closure-smooth cutoff requires eta'(0) = 0");
    impl_ = std::make_shared<Impl>(coeffs, grid, r_lo, r_hi);
}

std::vector<double> ResidualBattery::evaluate(const Trajectory& traj,
                                              const NoisePath& noise) const {
    const Impl& im = *impl_;
    const Grid& grid = im.grid;
    const long J = grid.total();
    const long steps = traj.steps;
    if (traj.snapshots.size() != static_cast<std::size_t>(steps + 1))
        throw domain_error("entropy residual needs an every-step trajectory");
    if (noise.steps != steps || noise.k_modes != im.K)
        throw domain_error("entropy residual: noise grid does not match the trajectory");
    if (traj.grid.cells_per_axis != grid.cells_per_axis || traj.grid.dim != grid.dim)
        throw domain_error("entropy residual: trajectory grid does not match the battery");

    const double dt = traj.dt;
    const double vol = grid.cell_volume();
    const int dim = im.dim;
    const int K = im.K;
    const int J1 = grid.cells_per_axis;
    const long intervals = im.nodes - 1;

    {
        double lo = 0.0, hi = 0.0;
        for (const auto& snap : traj.snapshots)
            for (double v : snap.u) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        if (lo < im.r0 - 1e-12 || hi > im.node_r(im.nodes - 1) + 1e-12)
            throw domain_error("entropy residual: trajectory leaves the battery r-range");
    }

    // pair-independent quantities per (snapshot, cell); the parabolic terms
    // read them at the slab's right state (matching the implicit step), the
    // stochastic terms at the left state (Ito)
    const long snaps = steps + 1;
    std::vector<double> gradb(static_cast<std::size_t>(snaps) * J);
    std::vector<double> divs(static_cast<std::size_t>(snaps) * J * std::max(K, 1));
    std::vector<double> bvec(static_cast<std::size_t>(snaps) * J * dim);
    std::vector<double> fdiv(static_cast<std::size_t>(snaps) * J);
    std::vector<double> Fval(static_cast<std::size_t>(snaps) * J);
    {
        std::vector<double> br(J);
        for (long n = 0; n < snaps; ++n) {
            const auto& u = traj.snapshots[n].u;
            for (long j = 0; j < J; ++j) br[j] = im.bracket_a(u[j]);
            for (long j = 0; j < J; ++j) {
                Point x = grid.center(j);
                double g2 = 0.0;
                if (dim == 1) {
                    int jj = static_cast<int>(j);
                    double bl = jj > 0 ? br[jj - 1] : -br[0];
                    double bu = jj + 1 < J1 ? br[jj + 1] : -br[J1 - 1];
                    double gv = (bu - bl) / (2.0 * grid.h[0]);
                    g2 = gv * gv;
                } else {
                    int i = static_cast<int>(j % J1), jj = static_cast<int>(j / J1);
                    auto bat = [&](int ii, int j2) {
                        double sgn = 1.0;
                        if (ii < 0) { ii = 0; sgn = -sgn; }
                        if (ii >= J1) { ii = J1 - 1; sgn = -sgn; }
                        if (j2 < 0) { j2 = 0; sgn = -sgn; }
                        if (j2 >= J1) { j2 = J1 - 1; sgn = -sgn; }
                        return sgn * br[grid.index(ii, j2)];
                    };
                    double g0 = (bat(i + 1, jj) - bat(i - 1, jj)) / (2.0 * grid.h[0]);
                    double g1 = (bat(i, jj + 1) - bat(i, jj - 1)) / (2.0 * grid.h[1]);
                    g2 = g0 * g0 + g1 * g1;
                }
                const std::size_t sc = static_cast<std::size_t>(n) * J + j;
                gradb[sc] = g2;
                double uj = u[j];
                for (int k = 0; k < K; ++k)
                    divs[sc * K + k] = im.coeffs.noise.modes[k].div_sigma(x, uj);
                Vec b = im.coeffs.ito.b(x, uj);
                for (int i2 = 0; i2 < dim; ++i2) bvec[sc * dim + i2] = b[i2];
                fdiv[sc] = im.coeffs.ito.f_div(x, uj);
                Fval[sc] = im.coeffs.drift.F(x, uj);
            }
        }
    }

    std::vector<double> out(pairs_.size(), 0.0);

    std::vector<double> etap_sub(static_cast<std::size_t>(intervals) * 5);
    std::vector<double> etap_node(im.nodes);
    std::vector<double> T_asq(im.nodes);
    std::vector<std::vector<double>> T_a(im.acomp), T_adivfr(dim),
        T_sr(std::max(K * dim, 1)), T_srx(std::max(K, 1));
    std::vector<double> T_frx(static_cast<std::size_t>(J) * im.nodes);
    for (auto& t : T_a) t.resize(static_cast<std::size_t>(J) * im.nodes);
    for (auto& t : T_adivfr) t.resize(static_cast<std::size_t>(J) * im.nodes);
    for (auto& t : T_sr) t.resize(static_cast<std::size_t>(J) * im.nodes);
    for (auto& t : T_srx) t.resize(static_cast<std::size_t>(J) * im.nodes);
    std::vector<double> rho(J), lap(J);
    std::vector<double> drho(static_cast<std::size_t>(J) * dim);
    std::vector<double> hrho(static_cast<std::size_t>(J) * im.acomp);

    for (std::size_t pi = 0; pi < pairs_.size(); ++pi) {
        const auto& pair = pairs_[pi];
        const auto& eta = pair.eta;

        for (long i = 0; i < intervals; ++i)
            for (int q = 0; q < 5; ++q)
                etap_sub[i * 5 + q] = eta.eta_p(im.node_r(i) + im.dr * kGlX[q]);
        for (long i = 0; i < im.nodes; ++i) etap_node[i] = eta.eta_p(im.node_r(i));

        auto build_scalar = [&](const std::vector<double>& sub, std::vector<double>& T,
                                long j) {
            const std::size_t base = static_cast<std::size_t>(j) * intervals * 5;
            const std::size_t tb = static_cast<std::size_t>(j) * im.nodes;
            T[tb + im.zero_node] = 0.0;
            for (long i = im.zero_node; i + 1 < im.nodes; ++i) {
                double s = 0.0;
                for (int q = 0; q < 5; ++q)
                    s += kGlW[q] * sub[base + i * 5 + q] * etap_sub[i * 5 + q];
                T[tb + i + 1] = T[tb + i] + im.dr * s;
            }
            for (long i = im.zero_node; i > 0; --i) {
                double s = 0.0;
                for (int q = 0; q < 5; ++q)
                    s += kGlW[q] * sub[base + (i - 1) * 5 + q] * etap_sub[(i - 1) * 5 + q];
                T[tb + i - 1] = T[tb + i] - im.dr * s;
            }
        };
        {
            T_asq[im.zero_node] = 0.0;
            for (long i = im.zero_node; i + 1 < im.nodes; ++i) {
                double s = 0.0;
                for (int q = 0; q < 5; ++q)
                    s += kGlW[q] * im.asq_sub[i * 5 + q] * etap_sub[i * 5 + q];
                T_asq[i + 1] = T_asq[i] + im.dr * s;
            }
            for (long i = im.zero_node; i > 0; --i) {
                double s = 0.0;
                for (int q = 0; q < 5; ++q)
                    s += kGlW[q] * im.asq_sub[(i - 1) * 5 + q] * etap_sub[(i - 1) * 5 + q];
                T_asq[i - 1] = T_asq[i] - im.dr * s;
            }
        }
        for (long j = 0; j < J; ++j) {
            for (int c = 0; c < im.acomp; ++c) build_scalar(im.a_sub[c], T_a[c], j);
            for (int i = 0; i < dim; ++i) build_scalar(im.adivfr_sub[i], T_adivfr[i], j);
            build_scalar(im.frx_sub, T_frx, j);
            for (int k = 0; k < K; ++k) {
                for (int i = 0; i < dim; ++i)
                    build_scalar(im.sr_sub[k * dim + i], T_sr[k * dim + i], j);
                build_scalar(im.srx_sub[k], T_srx[k], j);
            }
        }

        // The cutoff enters through the same discrete operators the scheme
        // uses (3-point second differences, central first differences, with
        // the smooth extension of rho past the wall), so the integration-by-
        // parts identities behind the inequality telescope exactly on the
        // grid.
        for (long j = 0; j < J; ++j) {
            Point x = grid.center(j);
            rho[j] = pair.space.value(x);
        }
        for (long j = 0; j < J; ++j) {
            Point x = grid.center(j);
            if (dim == 1) {
                int jj = static_cast<int>(j);
                double rm = pair.space.value({x[0] - grid.h[0], 0.0});
                double rp = pair.space.value({x[0] + grid.h[0], 0.0});
                drho[j] = (rp - rm) / (2.0 * grid.h[0]);
                hrho[j] = (rp - 2.0 * rho[jj] + rm) / (grid.h[0] * grid.h[0]);
                lap[j] = hrho[j];
            } else {
                int i = static_cast<int>(j % J1), jj = static_cast<int>(j / J1);
                auto rv = [&](int di, int dj) {
                    return pair.space.value({x[0] + di * grid.h[0], x[1] + dj * grid.h[1]});
                };
                double r00 = rho[j];
                double rxp = rv(1, 0), rxm = rv(-1, 0), ryp = rv(0, 1), rym = rv(0, -1);
                drho[j * dim + 0] = (rxp - rxm) / (2.0 * grid.h[0]);
                drho[j * dim + 1] = (ryp - rym) / (2.0 * grid.h[1]);
                double hxx = (rxp - 2 * r00 + rxm) / (grid.h[0] * grid.h[0]);
                double hyy = (ryp - 2 * r00 + rym) / (grid.h[1] * grid.h[1]);
                double hxy = (rv(1, 1) - rv(1, -1) - rv(-1, 1) + rv(-1, -1)) /
                             (4.0 * grid.h[0] * grid.h[1]);
                hrho[j * im.acomp + 0] = hxx;
                hrho[j * im.acomp + 1] = hxy;
                hrho[j * im.acomp + 2] = hyy;
                lap[j] = hxx + hyy;
                (void)i;
                (void)jj;
            }
        }

        auto lookup = [&](const std::vector<double>& T, const std::vector<double>& C, long j,
                          double u) {
            double s = (u - im.r0) / im.dr;
            long i = static_cast<long>(s);
            if (i < 0) i = 0;
            if (i > intervals - 1) i = intervals - 1;
            double t = s - static_cast<double>(i);
            const std::size_t tb = static_cast<std::size_t>(j) * im.nodes + i;
            return hermite(t, T[tb], T[tb + 1], C[tb] * etap_node[i],
                           C[tb + 1] * etap_node[i + 1], im.dr);
        };
        auto lookup_asq = [&](double u) {
            double s = (u - im.r0) / im.dr;
            long i = static_cast<long>(s);
            if (i < 0) i = 0;
            if (i > intervals - 1) i = intervals - 1;
            double t = s - static_cast<double>(i);
            return hermite(t, T_asq[i], T_asq[i + 1], im.asq_node[i] * etap_node[i],
                           im.asq_node[i + 1] * etap_node[i + 1], im.dr);
        };

        const bool skip_above =
            eta.orient == Orientation::PlusAboveShift && eta.shift >= 0.0;
        const bool skip_below =
            eta.orient == Orientation::PlusBelowShift && eta.shift <= 0.0;

        double R = 0.0;
        {
            double tp0 = pair.time.value(0.0);
            if (tp0 != 0.0) {
                double acc = 0.0;
                for (long j = 0; j < J; ++j) acc += eta.eta(traj.snapshots[0].u[j]) * rho[j];
                R += acc * tp0 * vol;
            }
        }

        for (long n = 0; n < steps; ++n) {
            double tp = pair.time.value(static_cast<double>(n) * dt);
            double tp_next = pair.time.value(static_cast<double>(n + 1) * dt);
            if (tp == 0.0 && tp_next == 0.0) continue;
            const double dtp = tp_next - tp;
            const auto& u = traj.snapshots[n].u;
            const auto& u_next = traj.snapshots[n + 1].u;
            const double* dwrow = K > 0 ? noise.increments.data() + n * K : nullptr;

            double acc = 0.0;
            // slab-exact -int eta(u) d_t phi with the slab's right state,
            // which pairs the eta increments against tp at the left point
            // after summation by parts in time; parabolic terms also at the
            // right state (the implicit step's point)
            for (long j = 0; j < J; ++j) {
                const double un = u_next[j];
                if (!((skip_above && un <= eta.shift) || (skip_below && un >= eta.shift))) {
                    const double ep = eta.eta_p(un);
                    const double epp = eta.eta_pp(un);
                    const std::size_t sc = static_cast<std::size_t>(n + 1) * J + j;
                    acc += eta.eta(un) * dtp * rho[j];

                    double term = lookup_asq(un) * lap[j];
                    term += lookup(T_a[0], im.a_node[0], j, un) * hrho[j * im.acomp + 0];
                    if (im.acomp == 3) {
                        term +=
                            2.0 * lookup(T_a[1], im.a_node[1], j, un) * hrho[j * im.acomp + 1];
                        term += lookup(T_a[2], im.a_node[2], j, un) * hrho[j * im.acomp + 2];
                    }
                    for (int i = 0; i < dim; ++i)
                        term += (lookup(T_adivfr[i], im.adivfr_node[i], j, un) -
                                 ep * bvec[sc * dim + i]) *
                                drho[j * dim + i];
                    term += (ep * fdiv[sc] - lookup(T_frx, im.frx_node, j, un) +
                             ep * Fval[sc]) *
                            rho[j];
                    term -= epp * gradb[sc] * rho[j];
                    acc += term * tp * dt;
                }

                // stochastic integral and its Ito quadratic at the left state
                if (K > 0) {
                    const double uj = u[j];
                    if ((skip_above && uj <= eta.shift) || (skip_below && uj >= eta.shift))
                        continue;
                    const double ep = eta.eta_p(uj);
                    const double epp = eta.eta_pp(uj);
                    const std::size_t sc = static_cast<std::size_t>(n) * J + j;
                    double s2 = 0.0;
                    for (int k = 0; k < K; ++k) s2 += divs[sc * K + k] * divs[sc * K + k];
                    acc += 0.5 * epp * s2 * rho[j] * tp * dt;
                    for (int k = 0; k < K; ++k) {
                        double st = (ep * divs[sc * K + k] -
                                     lookup(T_srx[k], im.srx_node[k], j, uj)) *
                                    rho[j];
                        for (int i = 0; i < dim; ++i)
                            st -= lookup(T_sr[k * dim + i], im.sr_node[k * dim + i], j, uj) *
                                  drho[j * dim + i];
                        acc += st * tp * dwrow[k];
                    }
                }
            }
            R += acc * vol;
        }
        out[pi] = R;
    }
    return out;
}

double entropy_residual(const Trajectory& traj, const NoisePath& noise,
                        const EntropyTestPair& pair, const CoefficientSet& coeffs) {
    if (!pair_admissible(pair))
        throw domain_error("entropy_residual: inadmissible pair " + pair.descriptor);
    double lo = 0.0, hi = 1.0;
    for (const auto& snap : traj.snapshots)
        for (double v : snap.u) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    ResidualBattery battery(coeffs, traj.grid, {pair}, lo - 0.5, hi + 0.5);
    return battery.evaluate(traj, noise)[0];
}

double check_chain_rule(const Trajectory& traj, const std::function<double(double)>& f,
                        const CoefficientSet& coeffs) {
    const Grid& grid = traj.grid;
    const int J1 = grid.cells_per_axis;
    if (traj.snapshots.size() < 2) throw domain_error("check_chain_rule: trajectory empty");

    double lo = 0.0, hi = 1.0;
    for (const auto& snap : traj.snapshots)
        for (double v : snap.u) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    lo -= 0.5;
    hi += 0.5;
    const long N = 8192;
    const double dr = (hi - lo) / static_cast<double>(N);
    long zero = std::lround(std::clamp((0.0 - lo) / dr, 0.0, static_cast<double>(N)));
    std::vector<double> Taf(N + 1, 0.0), Ta(N + 1, 0.0);
    const auto& a = coeffs.phi.a;
    auto node = [&](long i) { return lo + dr * static_cast<double>(i); };
    for (long i = zero; i + 1 <= N; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (int q = 0; q < 5; ++q) {
            double r = node(i) + dr * kGlX[q];
            double av = a(r);
            s1 += kGlW[q] * av * f(r);
            s2 += kGlW[q] * av;
        }
        Taf[i + 1] = Taf[i] + dr * s1;
        Ta[i + 1] = Ta[i] + dr * s2;
    }
    for (long i = zero; i > 0; --i) {
        double s1 = 0.0, s2 = 0.0;
        for (int q = 0; q < 5; ++q) {
            double r = node(i - 1) + dr * kGlX[q];
            double av = a(r);
            s1 += kGlW[q] * av * f(r);
            s2 += kGlW[q] * av;
        }
        Taf[i - 1] = Taf[i] - dr * s1;
        Ta[i - 1] = Ta[i] - dr * s2;
    }
    auto interp = [&](const std::vector<double>& T, double u) {
        double s = (u - lo) / dr;
        long i = static_cast<long>(std::clamp(s, 0.0, static_cast<double>(N - 1)));
        double t = s - static_cast<double>(i);
        return T[i] * (1 - t) + T[i + 1] * t;
    };

    double mismatch_sq = 0.0;
    const double dt = traj.dt;
    const double vol = grid.cell_volume();
    for (long n = 0; n < traj.steps; ++n) {
        const auto& u = traj.snapshots[n].u;
        if (grid.dim == 1) {
            for (int j = 1; j + 1 < J1; ++j) {
                double d1 = (interp(Taf, u[j + 1]) - interp(Taf, u[j - 1])) / (2 * grid.h[0]);
                double d2 =
                    f(u[j]) * (interp(Ta, u[j + 1]) - interp(Ta, u[j - 1])) / (2 * grid.h[0]);
                mismatch_sq += (d1 - d2) * (d1 - d2) * vol * dt;
            }
        } else {
            for (int j2 = 1; j2 + 1 < J1; ++j2) {
                for (int i = 1; i + 1 < J1; ++i) {
                    for (int ax = 0; ax < 2; ++ax) {
                        long p = grid.index(i + (ax == 0), j2 + (ax == 1));
                        long m = grid.index(i - (ax == 0), j2 - (ax == 1));
                        long c = grid.index(i, j2);
                        double d1 =
                            (interp(Taf, u[p]) - interp(Taf, u[m])) / (2 * grid.h[ax]);
                        double d2 = f(u[c]) * (interp(Ta, u[p]) - interp(Ta, u[m])) /
                                    (2 * grid.h[ax]);
                        mismatch_sq += (d1 - d2) * (d1 - d2) * vol * dt;
                    }
                }
            }
        }
    }
    return std::sqrt(mismatch_sq);
}

} // namespace condiff
