#pragma once

#include "condiff/model.hpp"

#include <string>

namespace condiff {

// Built-in named coefficient families used by the config format and tests.

// Phi(r) = r |r|^{m-1} (porous medium); a(r) = sqrt(m) |r|^{(m-1)/2}, exact
// at r = 0.
DiffusionNonlinearity make_pme_phi(double m, double K = 2.0);

// Phi(r) = eps * r (heat equation); declared smooth.
DiffusionNonlinearity make_linear_phi(double eps, double K = 2.0);

// Linear gradient noise sigma^{ik}(x,r) = c * r * h^{ik}(x) with closed-form
// derivative oracles.  Shapes on the box (0,L1)x(0,L2):
//   trig: 1d  h^k(x)   = sin(k pi x / L1)
//         2d  h^{1k}   = sin(k pi x1/L1) cos(k pi x2/L2)
//             h^{2k}   = cos(k pi x1/L1) sin(k pi x2/L2)
//   poly: 1d  h^k(x)   = (4 x(L1-x)/L1^2)^k
//         2d  product of the 1d profiles per axis
NoiseField make_linear_gradient_noise(const Box& box, int k_modes, double c,
                                      const std::string& shape = "trig");

// sigma^k(x, r) = h_k(x) independent of r (fails the zero condition unless
// div h = 0); used to exercise validators and the sigma_r = 0 path.
NoiseField make_additive_noise_1d(double c, int k_modes, double L);

// G^i(x,r) = v_i * r (constant advection velocity) and F(x,r) = -lambda * r.
DriftFields make_advection_reaction_drift(int dim, const Vec& velocity, double lambda);

// Initial data on the box; all non-negative.
std::function<double(const Point&)> make_initial_bump(const Box& box, double height,
                                                      double center_frac = 0.5,
                                                      double width_frac = 0.5);
std::function<double(const Point&)> make_initial_sine(const Box& box, double height);
std::function<double(const Point&)> make_initial_constant(double value);
std::function<double(const Point&)> make_initial_ramp(const Box& box, double slope);

} // namespace condiff
