#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "heatflow/common.hpp"
#include "heatflow/interpolate.hpp"
#include "heatflow/numerics.hpp"
#include "heatflow/potentials.hpp"

namespace heatflow {

/// Probability density on [a,b] described by an unnormalized log-density.
/// The exponent is shifted by its sampled maximum before quadrature so the
/// normalization is well scaled; CDF values accumulate over cached
/// checkpoints, keeping every evaluation within 1e-12 absolute.
class Density1D {
public:
    using LogFn = std::function<double(double)>;

    Density1D(LogFn log_unnorm, double a, double b)
        : logf_(std::move(log_unnorm)), a_(a), b_(b) {
        if (!(b_ > a_)) throw std::invalid_argument("Density1D: empty interval");
        shift_ = -std::numeric_limits<double>::infinity();
        const int scan = 4096;
        for (int i = 0; i <= scan; ++i) {
            const double v = logf_(a_ + (b_ - a_) * static_cast<double>(i) / scan);
            if (std::isfinite(v)) shift_ = std::max(shift_, v);
        }
        if (!std::isfinite(shift_)) throw std::invalid_argument("Density1D: log-density never finite");
        z_ = integrate(a_, b_, 1e-14 * (b_ - a_));
        if (!(z_ > 0.0) || !std::isfinite(z_))
            throw std::invalid_argument("Density1D: non-normalizable density");
        cdf_cache_ = {{a_, 0.0}, {b_, 1.0}};
    }

    double lower() const { return a_; }
    double upper() const { return b_; }

    double pdf(double x) const {
        if (x <= a_ || x >= b_) return (x == a_ || x == b_) ? raw(x) / z_ : 0.0;
        return raw(x) / z_;
    }

    double log_pdf(double x) const { return logf_(x) - shift_ - std::log(z_); }

    /// |integral of pdf - 1| on a refined pass; certifies the normalization.
    double normalization_residual() const {
        const double i2 = integrate(a_, b_, 1e-15 * (b_ - a_));
        return std::fabs(i2 / z_ - 1.0);
    }

    double cdf(double x) const {
        if (x <= a_) return 0.0;
        if (x >= b_) return 1.0;
        auto hi = cdf_cache_.lower_bound(x);
        auto lo = std::prev(hi);
        // Integrate from the nearest checkpoint; cache the result.
        double val;
        if (hi != cdf_cache_.end() && hi->first - x < x - lo->first)
            val = hi->second - integrate(x, hi->first, 1e-15) / z_;
        else
            val = lo->second + integrate(lo->first, x, 1e-15) / z_;
        val = std::clamp(val, 0.0, 1.0);
        cdf_cache_.emplace(x, val);
        return val;
    }

    /// Generalized inverse CDF; u in (0,1).
    double quantile(double u) const {
        if (!(u > 0.0 && u < 1.0)) throw std::domain_error("quantile: u outside (0,1)");
        return quantile_from(u, a_, b_);
    }

    /// Same, with a caller-supplied bracket [lo,hi] known to contain the root.
    double quantile_from(double u, double lo, double hi) const {
        auto f = [&](double x) { return cdf(x) - u; };
        auto df = [&](double x) { return pdf(x); };
        return bracketed_newton(f, df, lo, hi, 1e-13, 1e-15 * (b_ - a_));
    }

private:
    double raw(double x) const {
        const double lv = logf_(x) - shift_;
        return lv < -745.0 ? 0.0 : std::exp(lv);
    }

    double integrate(double lo, double hi, double tol) const {
        if (hi <= lo) return 0.0;
        return adaptive_simpson([this](double x) { return raw(x); }, lo, hi, tol);
    }

    LogFn logf_;
    double a_, b_;
    double shift_ = 0.0;
    double z_ = 1.0;
    mutable std::map<double, double> cdf_cache_;
};

/// Sampled monotone transport map with a shape-preserving interpolant.
class MonotoneMap1D {
public:
    MonotoneMap1D(std::vector<double> xs, std::vector<double> ts)
        : x_(std::move(xs)), t_(std::move(ts)) {
        if (x_.size() != t_.size() || x_.size() < 5)
            throw std::invalid_argument("MonotoneMap1D: need >= 5 samples");
        for (std::size_t i = 1; i < t_.size(); ++i)
            if (!(t_[i] > t_[i - 1]))
                throw invariant_error("MonotoneMap1D: samples not strictly increasing at index " +
                                      std::to_string(i));
        interp_ = MonotoneCubic(x_, t_);
    }

    double operator()(double x) const { return interp_(x); }
    const std::vector<double>& abscissae() const { return x_; }
    const std::vector<double>& values() const { return t_; }

    /// Max slope between consecutive samples; upper bound used by the
    /// contraction certificates.
    double lipschitz_estimate() const {
        double worst = 0.0;
        for (std::size_t i = 1; i < x_.size(); ++i)
            worst = std::max(worst, (t_[i] - t_[i - 1]) / (x_[i] - x_[i - 1]));
        return worst;
    }

private:
    std::vector<double> x_, t_;
    MonotoneCubic interp_;
};

/// T = F_target^{-1} o F_source sampled on xs (ascending). Roots are located
/// incrementally, so the whole map costs one sweep of the target CDF.
inline MonotoneMap1D quantile_map(const Density1D& source, const Density1D& target,
                                  const std::vector<double>& xs) {
    std::vector<double> ts;
    ts.reserve(xs.size());
    double lo = target.lower();
    for (double x : xs) {
        const double u = source.cdf(x);
        if (!(u > 0.0 && u < 1.0))
            throw std::domain_error("quantile_map: sample beyond numerical support, F=" +
                                    format_double(u));
        const double t = target.quantile_from(u, lo, target.upper());
        ts.push_back(t);
        lo = std::max(target.lower(), t - 1e-12 * (target.upper() - target.lower()));
    }
    return MonotoneMap1D(xs, ts);
}

struct LogDerivReport {
    double max_residual = 0.0;   // after matching the constant at the median
    double constant = 0.0;
};

/// Finite-difference check of log T'(x) = -rho(x) + rho(T(x)) + v(T(x)) + C.
/// Samples must be uniformly spaced; the interior 5-point stencil is O(h^4).
inline LogDerivReport verify_logderiv_identity(const MonotoneMap1D& map,
                                               const std::function<double(double)>& rho,
                                               const std::function<double(double)>& v) {
    const auto& x = map.abscissae();
    const auto& t = map.values();
    const std::size_t n = x.size();
    if (n < 7) throw std::invalid_argument("verify_logderiv_identity: too few samples");
    const double h = x[1] - x[0];
    for (std::size_t i = 1; i + 1 < n; ++i)
        if (std::fabs((x[i + 1] - x[i]) - h) > 1e-9 * std::fabs(h))
            throw std::invalid_argument("verify_logderiv_identity: nonuniform samples");
    std::vector<double> r;
    r.reserve(n);
    for (std::size_t i = 2; i + 2 < n; ++i) {
        const double tp = (-t[i + 2] + 8.0 * t[i + 1] - 8.0 * t[i - 1] + t[i - 2]) / (12.0 * h);
        if (!(tp > 0.0)) throw invariant_error("verify_logderiv_identity: nonpositive slope");
        r.push_back(std::log(tp) + rho(x[i]) - rho(t[i]) - v(t[i]));
    }
    LogDerivReport rep;
    rep.constant = r[r.size() / 2];
    for (double ri : r) rep.max_residual = std::max(rep.max_residual, std::fabs(ri - rep.constant));
    return rep;
}

struct RadialBrenierResult {
    MonotoneMap1D map;
    double max_ratio = 0.0;        // max T(x)/x over the mesh
    double lipschitz = 0.0;
    double identity_residual = 0.0;
};

/// Monotone transport between the radial reductions r^{n-1} e^{-rho} and
/// r^{n-1} e^{-rho-v} on [0, r_hi]. v must be non-decreasing, which forces
/// T(x) <= x; both facts are certified on the returned mesh.
inline RadialBrenierResult radial_brenier(int n, const RadialProfile& rho, const RadialProfile& v,
                                          double r_hi, std::size_t mesh_size = 2001,
                                          double quantile_lo = 1e-5, double quantile_hi = 1e-5) {
    if (n < 1) throw std::invalid_argument("radial_brenier: dimension must be >= 1");
    for (int j = 0; j <= 512; ++j) {
        const double r = r_hi * (j + 1) / 513.0;
        if (v.drho(r) < -1e-12)
            throw invariant_error("radial_brenier: v not non-decreasing at r=" + format_double(r));
    }
    auto logw = [n, &rho](double r) {
        return (n > 1 ? (n - 1) * std::log(r) : 0.0) - rho.rho(r);
    };
    Density1D src(logw, 0.0, r_hi);
    Density1D tgt([logw, &v](double r) { return logw(r) - v.rho(r); }, 0.0, r_hi);

    const double x_lo = src.quantile(quantile_lo);
    const double x_hi = src.quantile(1.0 - quantile_hi);
    const auto xs = linspace(x_lo, x_hi, mesh_size);
    auto map = quantile_map(src, tgt, xs);

    RadialBrenierResult out{std::move(map), 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < xs.size(); ++i)
        out.max_ratio = std::max(out.max_ratio, out.map.values()[i] / xs[i]);
    out.lipschitz = out.map.lipschitz_estimate();
    auto rho1 = [n, &rho](double r) { return rho.rho(r) - (n - 1) * std::log(r); };
    out.identity_residual =
        verify_logderiv_identity(out.map, rho1, [&v](double r) { return v.rho(r); }).max_residual;
    return out;
}

/// Squared 2-Wasserstein distance between 1D laws via the quantile coupling
/// integral, computed in x coordinates: W2^2 = int (T(x)-x)^2 dsource.
inline double wasserstein2_1d(const Density1D& source, const Density1D& target,
                              double tol = 1e-10) {
    double lo_hint = target.lower();
    auto integrand = [&](double x) {
        const double u = source.cdf(x);
        if (!(u > 0.0 && u < 1.0)) return 0.0;
        const double t = target.quantile_from(u, target.lower(), target.upper());
        return sq(t - x) * source.pdf(x);
    };
    (void)lo_hint;
    return adaptive_simpson(integrand, source.lower(), source.upper(), tol);
}

/// Contraction certificate for a radial map: max over the mesh of T(r)/r.
inline double coordinate_monotonicity_check(const MonotoneMap1D& map, const std::vector<double>& mesh) {
    double worst = 0.0;
    for (double r : mesh) {
        if (r <= 0.0) throw std::invalid_argument("coordinate_monotonicity_check: r <= 0");
        worst = std::max(worst, map(r) / r);
    }
    return worst;
}

}  // namespace heatflow
