#include <doctest.h>

#include "condiff/errors.hpp"
#include "condiff/families.hpp"
#include "condiff/model.hpp"
#include "condiff/quadrature.hpp"

#include <cmath>
#include <numbers>

using namespace condiff;

namespace {
constexpr double kPi = std::numbers::pi;

ProblemSpec pme_problem_1d(int k_modes = 0, double c = 0.5) {
    ProblemSpec spec;
    spec.domain = Box{1, {1.0, 1.0}};
    spec.horizon = 0.25;
    auto noise = k_modes > 0 ? make_linear_gradient_noise(spec.domain, k_modes, c)
                             : NoiseField{1, {}};
    spec.coeffs = make_coefficient_set(make_pme_phi(2.0, 2.0), noise, make_zero_drift(1));
    spec.initial = make_initial_bump(spec.domain, 1.0);
    return spec;
}
} // namespace

TEST_CASE("bracket_integral: constant, closed-form sqrt, zero") {
    ScalarField one = [](const Point&, double) { return 1.0; };
    CHECK(bracket_integral(one, {0, 0}, 2.5) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(bracket_integral(one, {0, 0}, 0.0) == 0.0);

    // a(s) = sqrt(2|s|): int_0^1 = 2 sqrt(2) / 3
    ScalarField a = [](const Point&, double s) { return std::sqrt(2.0 * std::abs(s)); };
    CHECK(bracket_integral(a, {0, 0}, 1.0) ==
          doctest::Approx(0.9428090415820634).epsilon(1e-9));
    // signed for negative upper limit
    CHECK(bracket_integral(a, {0, 0}, -1.0) ==
          doctest::Approx(-0.9428090415820634).epsilon(1e-9));
}

TEST_CASE("bracket_integral is additive over splits") {
    ScalarField g = [](const Point& x, double s) { return std::cos(s) + 0.1 * x[0]; };
    Point x{0.3, 0.0};
    double whole = bracket_integral(g, x, 1.7);
    double part = bracket_integral(g, x, 0.9);
    double rest = integrate_adaptive([&](double s) { return g(x, s); }, 0.9, 1.7, 1e-10);
    CHECK(whole == doctest::Approx(part + rest).epsilon(2e-10));
}

TEST_CASE("ito conversion: vanishing noise gives a=0, b=0, f=G") {
    DriftFields drift = make_advection_reaction_drift(1, {0.7, 0.0}, 0.0);
    NoiseField none{1, {}};
    ItoCoefficients ito = ito_from_stratonovich(none, drift);
    Point x{0.4, 0.0};
    CHECK(ito.a(x, 1.3)[0][0] == 0.0);
    CHECK(ito.b(x, 1.3)[0] == 0.0);
    CHECK(ito.f(x, 1.3)[0] == doctest::Approx(0.7 * 1.3));
}

TEST_CASE("ito conversion: one linear-gradient mode in 1d matches closed forms") {
    // sigma(x,r) = c r sin(pi x):
    //   a11 = c^2 sin^2(pi x) / 2
    //   b1  = pi c^2 r sin(pi x) cos(pi x)
    //   f1  = -b1 / 2
    const double c = 0.7;
    Box box{1, {1.0, 1.0}};
    NoiseField noise = make_linear_gradient_noise(box, 1, c);
    ItoCoefficients ito = ito_from_stratonovich(noise, make_zero_drift(1));
    for (double xv : {0.15, 0.5, 0.83}) {
        for (double r : {-1.0, 0.0, 1.2}) {
            Point x{xv, 0.0};
            double s = std::sin(kPi * xv), cs = std::cos(kPi * xv);
            CHECK(ito.a(x, r)[0][0] == doctest::Approx(0.5 * c * c * s * s).epsilon(1e-12));
            CHECK(ito.b(x, r)[0] == doctest::Approx(kPi * c * c * r * s * cs).epsilon(1e-12));
            CHECK(ito.f(x, r)[0] == doctest::Approx(-0.5 * kPi * c * c * r * s * cs).epsilon(1e-12));
        }
    }
}

TEST_CASE("ito conversion cross-checked against finite differences of sigma") {
    // forward-difference reconstruction of b = sigma_r * div sigma from sigma
    // alone; the error decays at first order in the step
    const double c = 0.6;
    Box box{1, {1.0, 1.0}};
    NoiseField noise = make_linear_gradient_noise(box, 1, c);
    ItoCoefficients ito = ito_from_stratonovich(noise, make_zero_drift(1));
    Point x{0.37, 0.0};
    const double r = 0.9;
    auto sig = [&](double xv, double rv) { return noise.modes[0].sigma({xv, 0.0}, rv)[0]; };
    double exact = ito.b(x, r)[0];
    std::array<double, 3> steps = {1e-3, 1e-4, 1e-5};
    std::array<double, 3> errs{};
    for (int i = 0; i < 3; ++i) {
        double h = steps[i];
        double sr = (sig(x[0], r + h) - sig(x[0], r)) / h;
        double dv = (sig(x[0] + h, r) - sig(x[0], r)) / h;
        errs[i] = std::abs(sr * dv - exact);
    }
    CHECK(errs[1] < 0.2 * errs[0]);
    CHECK(errs[2] < 0.2 * errs[1]);
}

TEST_CASE("ito conversion: r-independent sigma gives a=0, b=0, f=G") {
    NoiseField noise = make_additive_noise_1d(0.4, 1, 1.0);
    DriftFields drift = make_advection_reaction_drift(1, {0.2, 0.0}, 0.0);
    ItoCoefficients ito = ito_from_stratonovich(noise, drift);
    Point x{0.6, 0.0};
    CHECK(ito.a(x, 2.0)[0][0] == 0.0);
    CHECK(ito.b(x, 2.0)[0] == 0.0);
    CHECK(ito.f(x, 2.0)[0] == doctest::Approx(0.2 * 2.0));
}

TEST_CASE("ito conversion: missing oracle is a configuration error") {
    NoiseField broken{1, {NoiseMode{}}};
    CHECK_THROWS_AS(ito_from_stratonovich(broken, make_zero_drift(1)), config_error);
}

TEST_CASE("gram property: a is PSD at sampled points, including 2d cross terms") {
    Box box{2, {1.0, 1.0}};
    NoiseField noise = make_linear_gradient_noise(box, 3, 0.8);
    ItoCoefficients ito = ito_from_stratonovich(noise, make_zero_drift(2));
    for (double xv : {0.1, 0.5, 0.9})
        for (double yv : {0.2, 0.7})
            for (double r : {-2.0, 0.5, 3.0}) {
                Mat A = ito.a({xv, yv}, r);
                CHECK(A[0][1] == doctest::Approx(A[1][0]).epsilon(1e-14));
                double tr = A[0][0] + A[1][1];
                double det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
                double min_eig = tr / 2 - std::sqrt(std::max(tr * tr / 4 - det, 0.0));
                CHECK(min_eig >= -1e-12);
            }
}

TEST_CASE("validate_assumptions: pme m=2 with K=2 passes the Phi items") {
    ProblemSpec spec = pme_problem_1d();
    ValidationReport rep = validate_assumptions(spec);
    for (const auto& item : rep.items) {
        INFO(item.name, " empirical=", item.empirical);
        CHECK(item.pass);
    }
    CHECK(rep.all_pass());
    CHECK(rep.to_text().find("validation-report v1") == 0);
}

TEST_CASE("validate_assumptions: r-independent trig sigma fails the zero condition") {
    ProblemSpec spec = pme_problem_1d();
    spec.coeffs = make_coefficient_set(make_pme_phi(2.0, 2.0), make_additive_noise_1d(0.5, 1, 1.0),
                                       make_zero_drift(1));
    ValidationReport rep = validate_assumptions(spec);
    bool found = false;
    for (const auto& item : rep.items)
        if (item.name == "zero_condition.noise") {
            found = true;
            CHECK_FALSE(item.pass);
            // div sigma(x,0) = c pi cos(pi x); sup over lattice = c pi
            CHECK(item.empirical == doctest::Approx(0.5 * kPi).epsilon(1e-6));
        }
    CHECK(found);
    CHECK_FALSE(rep.all_pass());
}

TEST_CASE("validate_assumptions: zero drift passes the zero condition") {
    ProblemSpec spec = pme_problem_1d(2, 0.5);
    ValidationReport rep = validate_assumptions(spec);
    for (const auto& item : rep.items)
        if (item.name == "zero_condition.drift" || item.name == "zero_condition.noise")
            CHECK(item.pass);
}

TEST_CASE("regularize_phi honors the 2/n floor and the 4/n window bound") {
    DiffusionNonlinearity pme = make_pme_phi(2.0, 2.0);
    DiffusionNonlinearity reg = regularize_phi(pme, 10);
    CHECK(reg.a(0.0) >= 0.2);
    CHECK(std::abs(pme.a(4.0) - reg.a(4.0)) <= 0.4);
    CHECK(std::abs(reg.phi(0.0)) == 0.0);
    // Phi_n' = a_n^2 by construction
    for (double r : {-3.0, -0.4, 0.0, 0.7, 2.5}) {
        double h = 1e-6;
        double fd = (reg.phi(r + h) - reg.phi(r - h)) / (2 * h);
        CHECK(fd == doctest::Approx(reg.a(r) * reg.a(r)).epsilon(1e-5));
    }
}

TEST_CASE("regularization chain: sup error <= 4/n and monotone along the ladder") {
    DiffusionNonlinearity pme = make_pme_phi(2.0, 2.0);
    double prev = 1e30;
    for (int n : {4, 8, 16, 32}) {
        DiffusionNonlinearity reg = regularize_phi(pme, n);
        // sup over the common window |r| <= 4 at spacing 1/(10n)
        double sup = 0.0, amin = 1e30;
        for (int i = -40 * n; i <= 40 * n; ++i) {
            double r = static_cast<double>(i) / (10.0 * n);
            sup = std::max(sup, std::abs(pme.a(r) - reg.a(r)));
            amin = std::min(amin, reg.a(r));
        }
        CHECK(sup <= 4.0 / n);
        CHECK(amin >= 2.0 / n);
        CHECK(sup <= prev);
        prev = sup;
    }
}

TEST_CASE("regularize_phi is the identity for smooth non-degenerate Phi") {
    DiffusionNonlinearity lin = make_linear_phi(1.0, 2.0);
    DiffusionNonlinearity reg = regularize_phi(lin, 4);
    CHECK(reg.a(0.7) == lin.a(0.7));
    CHECK(reg.phi(-2.0) == lin.phi(-2.0));
    CHECK(reg.family == "linear");
}

TEST_CASE("truncate_initial") {
    Box box{1, {1.0, 1.0}};
    auto c = make_initial_constant(0.5);
    auto t1 = truncate_initial(c, 1.0);
    CHECK(t1({0.3, 0}) == 0.5);

    auto ramp = [](const Point& x) { return 10.0 * x[0]; };
    auto t5 = truncate_initial(ramp, 5.0);
    CHECK(t5({0.2, 0}) == doctest::Approx(2.0));
    CHECK(t5({0.9, 0}) == 5.0);

    auto peak = [](const Point& x) { return 7.3 * std::sin(kPi * x[0]); };
    auto t7 = truncate_initial(peak, 7.0);
    double mx = 0.0;
    for (int i = 0; i <= 100; ++i) mx = std::max(mx, t7({i / 100.0, 0}));
    CHECK(mx == 7.0);

    auto neg = [](const Point&) { return -0.1; };
    auto tn = truncate_initial(neg, 1.0);
    CHECK_THROWS_AS(tn({0.5, 0}), condiff::domain_error);
}

TEST_CASE("tabulated nonlinearity keeps strict monotonicity") {
    std::vector<double> r, p;
    for (int i = 0; i <= 40; ++i) {
        double x = -2.0 + i * 0.1;
        r.push_back(x);
        p.push_back(x * std::abs(x));
    }
    DiffusionNonlinearity tab = make_tabulated_phi(r, p, 2.0, 2.0);
    double prev = tab.phi(-2.0);
    for (int i = 1; i <= 400; ++i) {
        double x = -2.0 + i * 0.01;
        double cur = tab.phi(x);
        CHECK(cur > prev);
        prev = cur;
    }
    CHECK(tab.phi(1.0) == doctest::Approx(1.0).epsilon(1e-3));
}
