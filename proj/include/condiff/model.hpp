#pragma once

#include "condiff/point.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace condiff {

// Problem data for  du = (div Phi-flux + div G + F) dt + div sigma^k o dW^k
// on a box with u = 0 on the boundary, rewritten in Ito form with
//   a^ij = 1/2 sigma_r^ik sigma_r^jk,  b^i = sigma_r^ik sigma_xj^jk,
//   f^i  = G^i - 1/2 b^i.

// -------------------------------------------------------------------------
// Diffusion nonlinearity Phi with a(r) = sqrt(Phi'(r)).
struct DiffusionNonlinearity {
    std::function<double(double)> phi;       // Phi, Phi(0) = 0, strictly increasing
    std::function<double(double)> a;         // sqrt(Phi'); evaluated exactly at r = 0
    std::function<double(double)> bracket_a; // int_0^r a(s) ds (closed form or table)
    double m = 2.0;                          // growth exponent, > 1
    double K = 2.0;                          // assumption constant
    bool smooth = false; // declared C^1-with-bounded-derivative; enables the
                         // regularization identity shortcut when a >= 2/n
    std::string family = "custom";
};

// Tabulated nonlinearity; monotone cubic (Fritsch-Carlson) interpolation so
// strict monotonicity of the data is preserved.
DiffusionNonlinearity make_tabulated_phi(std::vector<double> r, std::vector<double> phi,
                                         double m, double K);

// -------------------------------------------------------------------------
// One noise mode sigma^{.,k}(x,r) with its derivative oracles.
struct NoiseMode {
    VectorField sigma;      // components sigma^{ik}, i < dim
    VectorField sigma_r;    // d/dr
    VectorField sigma_rr;   // d2/dr2
    MatrixField sigma_x;    // [i][j] = d sigma^i / d x_j
    MatrixField sigma_rx;   // [i][j] = d2 sigma^i / dr dx_j
    ScalarField div_sigma;       // sum_i d sigma^i / d x_i
    ScalarField div_sigma_r;     // d/dr of div_sigma
    VectorField grad_div_sigma;  // d/dx_i of div_sigma
};

// Builds all oracles from sigma alone by central finite differences.
NoiseMode make_mode_from_sigma(int dim, VectorField sigma, double fd_step = 1e-6);

struct NoiseField {
    int dim = 1;
    std::vector<NoiseMode> modes;
    int k_modes() const { return static_cast<int>(modes.size()); }
};

// -------------------------------------------------------------------------
struct DriftFields {
    int dim = 1;
    VectorField G;
    VectorField G_r;
    MatrixField G_x;   // [i][j] = d G^i / d x_j
    MatrixField G_rx;
    ScalarField F;
    ScalarField F_r;
};
DriftFields make_zero_drift(int dim);

// -------------------------------------------------------------------------
// Ito-form coefficients plus the derivative combinations the entropy module
// needs.  All maps are pure callables of (x, r) with the mode sum truncated
// at the field's K_modes.
struct ItoCoefficients {
    int dim = 1;
    MatrixField a;        // a^ij, symmetric PSD (Gram matrix)
    VectorField b;        // b^i
    VectorField f;        // f^i = G^i - b^i / 2
    VectorField a_div;    // sum_j d a^ij / d x_j
    VectorField f_r;      // d f^i / d r
    ScalarField f_div;    // sum_i d f^i / d x_i
    ScalarField f_r_div;  // sum_i d2 f^i / dr dx_i
};

ItoCoefficients ito_from_stratonovich(const NoiseField& noise, const DriftFields& drift);

struct CoefficientSet {
    DiffusionNonlinearity phi;
    NoiseField noise;
    DriftFields drift;
    ItoCoefficients ito;
};
CoefficientSet make_coefficient_set(DiffusionNonlinearity phi, NoiseField noise,
                                    DriftFields drift);

// -------------------------------------------------------------------------
struct Box {
    int dim = 1;
    std::array<double, 2> length = {1.0, 1.0};
    double volume() const { return dim == 1 ? length[0] : length[0] * length[1]; }
};

struct ProblemSpec {
    Box domain;
    double horizon = 1.0;
    CoefficientSet coeffs;
    std::function<double(const Point&)> initial; // xi >= 0
    std::string name = "problem";
};

// -------------------------------------------------------------------------
// Sampled assumption validation.  Verdicts never abort a simulation; failed
// items are carried into downstream reports.
struct ProbeLattice {
    int points_per_axis = 17; // spatial samples per axis
    int r_points = 601;
    double r_radius = 3.0;
};

struct ValidationItem {
    std::string name;
    bool pass = true;
    double empirical = 0.0; // empirical constant achieved (see note field)
    double bound = 0.0;     // the bound it was compared against (0 if report-only)
    std::string worst;      // worst probe point
    std::string note;
};

struct ValidationReport {
    std::vector<ValidationItem> items;
    bool all_pass() const;
    std::string to_text() const; // line-oriented serialization
};

ValidationReport validate_assumptions(const ProblemSpec& spec,
                                      const ProbeLattice& lattice = {});

// -------------------------------------------------------------------------
// Non-degenerate approximation Phi_n: a_n >= 2/n everywhere and
// sup_{|r|<=n} |a - a_n| <= 4/n, verified on a probe lattice of spacing
// <= 1/(10 n); throws if the construction misses the bound (internal error).
DiffusionNonlinearity regularize_phi(const DiffusionNonlinearity& phi, int n);

// Pointwise truncation xi_n = min(xi, n); rejects negative input values.
std::function<double(const Point&)> truncate_initial(
    const std::function<double(const Point&)>& xi, double n);

// Signed integral [[g]](x, r) = int_0^r g(x, s) ds by adaptive quadrature.
double bracket_integral(const ScalarField& g, const Point& x, double r,
                        double abs_tol = -1.0); // default 1e-10 * (1 + |r|)

} // namespace condiff
