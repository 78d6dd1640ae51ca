#include "condiff/families.hpp"
#include "condiff/errors.hpp"

#include <cmath>
#include <numbers>

namespace condiff {

DiffusionNonlinearity make_pme_phi(double m, double K) {
    if (m <= 1.0) throw domain_error("pme: exponent m must exceed 1");
    DiffusionNonlinearity d;
    d.m = m;
    d.K = K;
    d.family = "pme";
    d.phi = [m](double r) { return r == 0.0 ? 0.0 : r * std::pow(std::abs(r), m - 1.0); };
    double sm = std::sqrt(m);
    d.a = [m, sm](double r) {
        return r == 0.0 ? 0.0 : sm * std::pow(std::abs(r), (m - 1.0) / 2.0);
    };
    double c = 2.0 * sm / (m + 1.0);
    d.bracket_a = [m, c](double r) {
        if (r == 0.0) return 0.0;
        double s = r > 0 ? 1.0 : -1.0;
        return s * c * std::pow(std::abs(r), (m + 1.0) / 2.0);
    };
    d.smooth = false;
    return d;
}

DiffusionNonlinearity make_linear_phi(double eps, double K) {
    if (eps <= 0.0) throw domain_error("linear phi: eps must be positive");
    DiffusionNonlinearity d;
    d.m = 2.0;
    d.K = K;
    d.family = "linear";
    d.phi = [eps](double r) { return eps * r; };
    double se = std::sqrt(eps);
    d.a = [se](double) { return se; };
    d.bracket_a = [se](double r) { return se * r; };
    d.smooth = true;
    return d;
}

namespace {

constexpr double kPi = std::numbers::pi;

// 1d scalar profile with value/derivative/second derivative
struct Profile {
    std::function<double(double)> v, d1, d2;
};

Profile trig_profile(int k, double L) {
    double w = k * kPi / L;
    return {[w](double x) { return std::sin(w * x); },
            [w](double x) { return w * std::cos(w * x); },
            [w](double x) { return -w * w * std::sin(w * x); }};
}

Profile poly_profile(int k, double L) {
    // (4 x (L-x) / L^2)^k
    return {[k, L](double x) {
                double b = 4.0 * x * (L - x) / (L * L);
                return std::pow(b, k);
            },
            [k, L](double x) {
                double b = 4.0 * x * (L - x) / (L * L);
                double db = 4.0 * (L - 2.0 * x) / (L * L);
                return k * std::pow(b, k - 1) * db;
            },
            [k, L](double x) {
                double b = 4.0 * x * (L - x) / (L * L);
                double db = 4.0 * (L - 2.0 * x) / (L * L);
                double d2b = -8.0 / (L * L);
                return k * (k - 1) * std::pow(b, k - 2) * db * db +
                       k * std::pow(b, k - 1) * d2b;
            }};
}

Profile cos_profile(int k, double L) {
    double w = k * kPi / L;
    return {[w](double x) { return std::cos(w * x); },
            [w](double x) { return -w * std::sin(w * x); },
            [w](double x) { return -w * w * std::cos(w * x); }};
}

// Builds the closed-form oracle set for sigma(x,r) = c * r * H(x) where
// H^i(x) = prof[i][0](x1) * prof[i][1](x2)  (second factor == 1 in 1d).
NoiseMode separable_mode(int dim, double c, std::array<std::array<Profile, 2>, 2> prof) {
    auto H = [dim, prof](const Point& x, int i) {
        double v = prof[i][0].v(x[0]);
        if (dim == 2) v *= prof[i][1].v(x[1]);
        return v;
    };
    auto dH = [dim, prof](const Point& x, int i, int j) {
        if (dim == 1) return j == 0 ? prof[i][0].d1(x[0]) : 0.0;
        return j == 0 ? prof[i][0].d1(x[0]) * prof[i][1].v(x[1])
                      : prof[i][0].v(x[0]) * prof[i][1].d1(x[1]);
    };
    auto d2H = [dim, prof](const Point& x, int i, int j, int l) {
        // d^2 H^i / dx_j dx_l
        if (dim == 1) return (j == 0 && l == 0) ? prof[i][0].d2(x[0]) : 0.0;
        if (j == l) {
            return j == 0 ? prof[i][0].d2(x[0]) * prof[i][1].v(x[1])
                          : prof[i][0].v(x[0]) * prof[i][1].d2(x[1]);
        }
        return prof[i][0].d1(x[0]) * prof[i][1].d1(x[1]);
    };

    NoiseMode mode;
    mode.sigma = [c, dim, H](const Point& x, double r) {
        Vec out = zero_vec();
        for (int i = 0; i < dim; ++i) out[i] = c * r * H(x, i);
        return out;
    };
    mode.sigma_r = [c, dim, H](const Point& x, double) {
        Vec out = zero_vec();
        for (int i = 0; i < dim; ++i) out[i] = c * H(x, i);
        return out;
    };
    mode.sigma_rr = [](const Point&, double) { return zero_vec(); };
    mode.sigma_x = [c, dim, dH](const Point& x, double r) {
        Mat out = zero_mat();
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) out[i][j] = c * r * dH(x, i, j);
        return out;
    };
    mode.sigma_rx = [c, dim, dH](const Point& x, double) {
        Mat out = zero_mat();
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) out[i][j] = c * dH(x, i, j);
        return out;
    };
    mode.div_sigma = [c, dim, dH](const Point& x, double r) {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += dH(x, i, i);
        return c * r * s;
    };
    mode.div_sigma_r = [c, dim, dH](const Point& x, double) {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += dH(x, i, i);
        return c * s;
    };
    mode.grad_div_sigma = [c, dim, d2H](const Point& x, double r) {
        Vec out = zero_vec();
        for (int j = 0; j < dim; ++j) {
            double s = 0.0;
            for (int i = 0; i < dim; ++i) s += d2H(x, i, i, j);
            out[j] = c * r * s;
        }
        return out;
    };
    return mode;
}

Profile one_profile() {
    return {[](double) { return 1.0; }, [](double) { return 0.0; },
            [](double) { return 0.0; }};
}

} // namespace

NoiseField make_linear_gradient_noise(const Box& box, int k_modes, double c,
                                      const std::string& shape) {
    if (k_modes < 0) throw domain_error("noise: k_modes must be >= 0");
    NoiseField field;
    field.dim = box.dim;
    for (int k = 1; k <= k_modes; ++k) {
        std::array<std::array<Profile, 2>, 2> prof;
        if (shape == "trig") {
            if (box.dim == 1) {
                prof[0][0] = trig_profile(k, box.length[0]);
                prof[0][1] = one_profile();
            } else {
                prof[0][0] = trig_profile(k, box.length[0]);
                prof[0][1] = cos_profile(k, box.length[1]);
                prof[1][0] = cos_profile(k, box.length[0]);
                prof[1][1] = trig_profile(k, box.length[1]);
            }
        } else if (shape == "poly") {
            for (int i = 0; i < box.dim; ++i) {
                prof[i][0] = poly_profile(k, box.length[0]);
                prof[i][1] = box.dim == 2 ? poly_profile(k, box.length[1]) : one_profile();
            }
        } else {
            throw domain_error("noise: unknown shape '" + shape + "'");
        }
        field.modes.push_back(separable_mode(box.dim, c, prof));
    }
    return field;
}

NoiseField make_additive_noise_1d(double c, int k_modes, double L) {
    NoiseField field;
    field.dim = 1;
    for (int k = 1; k <= k_modes; ++k) {
        double w = k * kPi / L;
        NoiseMode mode;
        mode.sigma = [c, w](const Point& x, double) {
            return Vec{c * std::sin(w * x[0]), 0.0};
        };
        mode.sigma_r = [](const Point&, double) { return zero_vec(); };
        mode.sigma_rr = [](const Point&, double) { return zero_vec(); };
        mode.sigma_x = [c, w](const Point& x, double) {
            Mat out = zero_mat();
            out[0][0] = c * w * std::cos(w * x[0]);
            return out;
        };
        mode.sigma_rx = [](const Point&, double) { return zero_mat(); };
        mode.div_sigma = [c, w](const Point& x, double) {
            return c * w * std::cos(w * x[0]);
        };
        mode.div_sigma_r = [](const Point&, double) { return 0.0; };
        mode.grad_div_sigma = [c, w](const Point& x, double) {
            return Vec{-c * w * w * std::sin(w * x[0]), 0.0};
        };
        field.modes.push_back(mode);
    }
    return field;
}

DriftFields make_advection_reaction_drift(int dim, const Vec& velocity, double lambda) {
    DriftFields d;
    d.dim = dim;
    d.G = [velocity, dim](const Point&, double r) {
        Vec out = zero_vec();
        for (int i = 0; i < dim; ++i) out[i] = velocity[i] * r;
        return out;
    };
    d.G_r = [velocity, dim](const Point&, double) {
        Vec out = zero_vec();
        for (int i = 0; i < dim; ++i) out[i] = velocity[i];
        return out;
    };
    d.G_x = [](const Point&, double) { return zero_mat(); };
    d.G_rx = [](const Point&, double) { return zero_mat(); };
    d.F = [lambda](const Point&, double r) { return -lambda * r; };
    d.F_r = [lambda](const Point&, double) { return -lambda; };
    return d;
}

std::function<double(const Point&)> make_initial_bump(const Box& box, double height,
                                                      double center_frac,
                                                      double width_frac) {
    int dim = box.dim;
    Point c = {center_frac * box.length[0], dim == 2 ? center_frac * box.length[1] : 0.0};
    double half = 0.5 * width_frac * box.length[0];
    return [dim, c, half, height](const Point& x) {
        double rho2 = 0.0;
        for (int i = 0; i < dim; ++i) {
            double t = (x[i] - c[i]) / half;
            rho2 += t * t;
        }
        if (rho2 >= 1.0) return 0.0;
        return height * std::exp(1.0 - 1.0 / (1.0 - rho2));
    };
}

std::function<double(const Point&)> make_initial_sine(const Box& box, double height) {
    int dim = box.dim;
    double w0 = kPi / box.length[0];
    double w1 = dim == 2 ? kPi / box.length[1] : 0.0;
    return [dim, w0, w1, height](const Point& x) {
        double v = height * std::sin(w0 * x[0]);
        if (dim == 2) v *= std::sin(w1 * x[1]);
        return std::max(v, 0.0);
    };
}

std::function<double(const Point&)> make_initial_constant(double value) {
    return [value](const Point&) { return value; };
}

std::function<double(const Point&)> make_initial_ramp(const Box& box, double slope) {
    double L = box.length[0];
    return [slope, L](const Point& x) { return slope * x[0] / L; };
}

} // namespace condiff
