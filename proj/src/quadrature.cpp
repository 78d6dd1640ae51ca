#include "condiff/quadrature.hpp"
#include "condiff/errors.hpp"

#include <cmath>
#include <sstream>

namespace condiff {

namespace {

double checked(const std::function<double(double)>& f, double x) {
    double v = f(x);
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "integrand returned non-finite value at x=" << x;
        throw evaluation_error(os.str());
    }
    return v;
}

double simpson(double fa, double fm, double fb, double a, double b) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive(const std::function<double(double)>& f, double a, double b, double fa,
                double fm, double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m);
    double rm = 0.5 * (m + b);
    double flm = checked(f, lm);
    double frm = checked(f, rm);
    double left = simpson(fa, flm, fm, a, m);
    double right = simpson(fm, frm, fb, m, b);
    double err = left + right - whole;
    if (depth <= 0 || std::abs(err) <= 15.0 * tol)
        return left + right + err / 15.0;
    return adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double abs_tol) {
    if (a == b) return 0.0;
    double fa = checked(f, a);
    double fb = checked(f, b);
    double fm = checked(f, 0.5 * (a + b));
    double whole = simpson(fa, fm, fb, a, b);
    return adaptive(f, a, b, fa, fm, fb, whole, abs_tol, 48);
}

double integrate_gl5(const std::function<double(double)>& f, double a, double b) {
    // Nodes/weights for [-1, 1].
    static const double xs[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                 0.5384693101056831, 0.9061798459386640};
    static const double ws[5] = {0.2369268850561891, 0.4786286704993665,
                                 0.5688888888888889, 0.4786286704993665,
                                 0.2369268850561891};
    double c = 0.5 * (a + b);
    double hw = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < 5; ++i) s += ws[i] * f(c + hw * xs[i]);
    return s * hw;
}

} // namespace condiff
