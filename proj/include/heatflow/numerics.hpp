#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "heatflow/common.hpp"

namespace heatflow {

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    if (n < 2) throw std::invalid_argument("linspace: need at least 2 nodes");
    std::vector<double> x(n);
    const double h = (b - a) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) x[i] = a + h * static_cast<double>(i);
    x.back() = b;
    return x;
}

/// Thomas algorithm for a strictly diagonally dominant tridiagonal system.
/// lower[0] and upper[n-1] are ignored; solves in O(n) with no pivoting.
class TridiagonalSolver {
public:
    void solve(const std::vector<double>& lower, const std::vector<double>& diag,
               const std::vector<double>& upper, const std::vector<double>& rhs,
               std::vector<double>& x) {
        const std::size_t n = diag.size();
        if (lower.size() != n || upper.size() != n || rhs.size() != n)
            throw std::invalid_argument("tridiag: inconsistent sizes");
        cp_.resize(n);
        dp_.resize(n);
        x.resize(n);
        double beta = diag[0];
        if (beta == 0.0) throw numerical_abort("tridiag: zero pivot");
        cp_[0] = upper[0] / beta;
        dp_[0] = rhs[0] / beta;
        for (std::size_t i = 1; i < n; ++i) {
            beta = diag[i] - lower[i] * cp_[i - 1];
            if (beta == 0.0) throw numerical_abort("tridiag: zero pivot");
            cp_[i] = upper[i] / beta;
            dp_[i] = (rhs[i] - lower[i] * dp_[i - 1]) / beta;
        }
        x[n - 1] = dp_[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) x[i] = dp_[i] - cp_[i] * x[i + 1];
    }

private:
    std::vector<double> cp_, dp_;  // scratch, reused across solves
};

namespace detail {
inline double simpson(const std::function<double(double)>& f, double a, double fa, double b,
                      double fb, double m, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double fa,
                                   double b, double fb, double m, double fm, double whole,
                                   double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(f, a, fa, m, fm, lm, flm);
    const double right = simpson(f, m, fm, b, fb, rm, frm);
    const double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson with absolute tolerance; exact for cubics on each panel.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double abs_tol, int max_depth = 52) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
    const double whole = detail::simpson(f, a, fa, b, fb, m, fm);
    return detail::adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, abs_tol, max_depth);
}

/// Newton iteration confined to a sign-changing bracket; bisection fallback
/// guarantees convergence to |f| <= f_tol (or bracket width <= x_tol).
inline double bracketed_newton(const std::function<double(double)>& f,
                               const std::function<double(double)>& df, double lo, double hi,
                               double f_tol, double x_tol, int max_iter = 200) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw std::invalid_argument("bracketed_newton: no sign change in bracket");
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < max_iter; ++it) {
        double fx = f(x);
        if (std::fabs(fx) <= f_tol) return x;
        if ((fx > 0.0) == (fhi > 0.0)) {
            hi = x;
            fhi = fx;
        } else {
            lo = x;
            flo = fx;
        }
        if (hi - lo <= x_tol) return 0.5 * (lo + hi);
        const double d = df(x);
        double next = (d != 0.0) ? x - fx / d : lo - 1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

/// Cumulative trapezoid of sampled values; out[0] = 0.
inline std::vector<double> cumulative_trapezoid(const std::vector<double>& x,
                                                const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("cumulative_trapezoid: bad sizes");
    std::vector<double> c(x.size(), 0.0);
    for (std::size_t i = 1; i < x.size(); ++i)
        c[i] = c[i - 1] + 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return c;
}

}  // namespace heatflow
