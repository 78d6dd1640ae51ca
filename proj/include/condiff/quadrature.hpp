#pragma once

#include <functional>

namespace condiff {

// Adaptive Simpson quadrature with absolute tolerance.  Throws
// evaluation_error if the integrand returns a non-finite value.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double abs_tol);

// Fixed 5-point Gauss-Legendre rule on [a, b]; building block for cumulative
// tables of smooth integrands.
double integrate_gl5(const std::function<double(double)>& f, double a, double b);

} // namespace condiff
