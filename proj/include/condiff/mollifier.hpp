#pragma once

namespace condiff {

// The reference mollifier rho: non-negative, C-infinity, supp rho = (0,1),
// rho <= 2, integral 1.  Everything smooth in the library (entropy functions
// eta_delta, partition-of-unity profiles, shifted spatial mollifiers) is
// built from it.
//
//   rho(r)   = C * exp(-1 / (4 r (1-r)))  on (0,1), 0 elsewhere
//   cdf(r)   = int_0^r rho
//   eta2(r)  = int_0^r cdf   (second antiderivative; eta2(r) = r - rho_mean
//              for r >= 1)

double mollifier(double r);
double mollifier_prime(double r);
double mollifier_cdf(double r);
double mollifier_eta2(double r);

// int_0^1 s rho(s) ds, i.e. the constant gap eta2(r) - r for r >= 1.
double mollifier_mean();

// C-infinity step: 0 for t <= 0, 1 for t >= 1 (equals cdf).
double smooth_step(double t);
double smooth_step_prime(double t);
double smooth_step_second(double t);

} // namespace condiff
