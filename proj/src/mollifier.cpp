#include "condiff/mollifier.hpp"
#include "condiff/quadrature.hpp"

#include <cmath>
#include <vector>

namespace condiff {

namespace {

double bump_unnormalized(double r) {
    if (r <= 0.0 || r >= 1.0) return 0.0;
    return std::exp(-1.0 / (4.0 * r * (1.0 - r)));
}

struct MollifierTables {
    static constexpr int kIntervals = 8192;
    double norm;                 // C
    double mean;                 // int s rho(s) ds
    std::vector<double> cdf;     // at nodes i/kIntervals
    std::vector<double> eta2;

    MollifierTables() {
        double total = 0.0;
        const double h = 1.0 / kIntervals;
        cdf.resize(kIntervals + 1);
        cdf[0] = 0.0;
        for (int i = 0; i < kIntervals; ++i) {
            total += integrate_gl5(bump_unnormalized, i * h, (i + 1) * h);
            cdf[i + 1] = total;
        }
        norm = 1.0 / total;
        for (auto& v : cdf) v *= norm;

        // eta2 by integrating the cubic Hermite model of cdf on each
        // interval (slopes are rho exactly), so eta2' == cdf to the same
        // accuracy as the table itself.
        eta2.resize(kIntervals + 1);
        eta2[0] = 0.0;
        for (int i = 0; i < kIntervals; ++i) {
            double a = i * h;
            double f0 = cdf[i], f1 = cdf[i + 1];
            double d0 = norm * bump_unnormalized(a);
            double d1 = norm * bump_unnormalized(a + h);
            // integral of the Hermite cubic over the interval
            eta2[i + 1] = eta2[i] + h * (0.5 * (f0 + f1) + h * (d0 - d1) / 12.0);
        }
        mean = 1.0 - eta2[kIntervals];
    }

    double cdf_at(double r) const {
        if (r <= 0.0) return 0.0;
        if (r >= 1.0) return 1.0;
        const double h = 1.0 / kIntervals;
        int i = static_cast<int>(r * kIntervals);
        if (i >= kIntervals) i = kIntervals - 1;
        double t = (r - i * h) / h;
        double f0 = cdf[i], f1 = cdf[i + 1];
        double d0 = h * norm * bump_unnormalized(i * h);
        double d1 = h * norm * bump_unnormalized((i + 1) * h);
        double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * d0 +
               (-2 * t3 + 3 * t2) * f1 + (t3 - t2) * d1;
    }

    double eta2_at(double r) const {
        if (r <= 0.0) return 0.0;
        if (r >= 1.0) return r - mean;
        const double h = 1.0 / kIntervals;
        int i = static_cast<int>(r * kIntervals);
        if (i >= kIntervals) i = kIntervals - 1;
        double t = (r - i * h) / h;
        double f0 = eta2[i], f1 = eta2[i + 1];
        double d0 = h * cdf[i];
        double d1 = h * cdf[i + 1];
        double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * d0 +
               (-2 * t3 + 3 * t2) * f1 + (t3 - t2) * d1;
    }
};

const MollifierTables& tables() {
    static const MollifierTables t;
    return t;
}

} // namespace

double mollifier(double r) { return tables().norm * bump_unnormalized(r); }

double mollifier_prime(double r) {
    if (r <= 0.0 || r >= 1.0) return 0.0;
    double q = r * (1.0 - r);
    return mollifier(r) * (1.0 - 2.0 * r) / (4.0 * q * q);
}

double mollifier_cdf(double r) { return tables().cdf_at(r); }

double mollifier_eta2(double r) { return tables().eta2_at(r); }

double mollifier_mean() { return tables().mean; }

double smooth_step(double t) { return mollifier_cdf(t); }
double smooth_step_prime(double t) { return mollifier(t); }
double smooth_step_second(double t) { return mollifier_prime(t); }

} // namespace condiff
