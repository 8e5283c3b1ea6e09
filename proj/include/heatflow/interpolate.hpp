#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace heatflow {

/// Shape-preserving piecewise cubic (Fritsch-Carlson slopes): monotone data
/// yields a monotone interpolant, which inverse-CDF tables rely on.
class MonotoneCubic {
public:
    MonotoneCubic() = default;

    MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) throw std::invalid_argument("MonotoneCubic: bad sizes");
        for (std::size_t i = 1; i < n; ++i)
            if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("MonotoneCubic: abscissae not increasing");
        d_.assign(n, 0.0);
        std::vector<double> h(n - 1), delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            delta[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        if (n == 2) {
            d_[0] = d_[1] = delta[0];
        } else {
            for (std::size_t i = 1; i + 1 < n; ++i) {
                if (delta[i - 1] * delta[i] <= 0.0) {
                    d_[i] = 0.0;
                } else {
                    const double w1 = 2.0 * h[i] + h[i - 1];
                    const double w2 = h[i] + 2.0 * h[i - 1];
                    d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d_[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            d_[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
    }

    double operator()(double xq) const {
        const std::size_t j = locate(xq);
        const double h = x_[j + 1] - x_[j];
        const double t = (xq - x_[j]) / h;
        const double t2 = t * t, t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
        return h00 * y_[j] + h * h10 * d_[j] + h01 * y_[j + 1] + h * h11 * d_[j + 1];
    }

    double derivative(double xq) const {
        const std::size_t j = locate(xq);
        const double h = x_[j + 1] - x_[j];
        const double t = (xq - x_[j]) / h;
        const double t2 = t * t;
        const double g00 = (6 * t2 - 6 * t) / h, g10 = 3 * t2 - 4 * t + 1;
        const double g01 = (-6 * t2 + 6 * t) / h, g11 = 3 * t2 - 2 * t;
        return g00 * y_[j] + g10 * d_[j] + g01 * y_[j + 1] + g11 * d_[j + 1];
    }

    double x_front() const { return x_.front(); }
    double x_back() const { return x_.back(); }
    const std::vector<double>& abscissae() const { return x_; }
    const std::vector<double>& values() const { return y_; }

private:
    static double edge_slope(double h0, double h1, double del0, double del1) {
        // Three-point one-sided estimate, clipped to preserve shape.
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (d * del0 <= 0.0) return 0.0;
        if (del0 * del1 < 0.0 && std::fabs(d) > 3.0 * std::fabs(del0)) return 3.0 * del0;
        return d;
    }

    std::size_t locate(double xq) const {
        if (xq <= x_.front()) return 0;
        if (xq >= x_.back()) return x_.size() - 2;
        const auto it = std::upper_bound(x_.begin(), x_.end(), xq);
        return static_cast<std::size_t>(it - x_.begin()) - 1;
    }

    std::vector<double> x_, y_, d_;
};

namespace detail {
/// Catmull-Rom weights at local coordinate u in [0,1].
inline double catmull_rom(double fm1, double f0, double f1, double f2, double u) {
    const double a0 = f0;
    const double a1 = 0.5 * (f1 - fm1);
    const double a2 = fm1 - 2.5 * f0 + 2.0 * f1 - 0.5 * f2;
    const double a3 = 0.5 * (f2 - fm1) + 1.5 * (f0 - f1);
    return a0 + u * (a1 + u * (a2 + u * a3));
}
}  // namespace detail

/// C^1 cubic interpolation on a uniform grid; one-cell cubic extrapolation
/// supplies ghost values at the edges.
class UniformCubic1D {
public:
    UniformCubic1D() = default;
    UniformCubic1D(double x0, double h, std::vector<double> f) : x0_(x0), h_(h), f_(std::move(f)) {
        if (f_.size() < 4) throw std::invalid_argument("UniformCubic1D: need >= 4 nodes");
    }

    double operator()(double x) const {
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(f_.size());
        double s = (x - x0_) / h_;
        std::ptrdiff_t j = static_cast<std::ptrdiff_t>(std::floor(s));
        j = std::clamp<std::ptrdiff_t>(j, 0, n - 2);
        const double u = s - static_cast<double>(j);
        return detail::catmull_rom(fetch(j - 1), fetch(j), fetch(j + 1), fetch(j + 2), u);
    }

    double x_min() const { return x0_; }
    double x_max() const { return x0_ + h_ * static_cast<double>(f_.size() - 1); }

private:
    double fetch(std::ptrdiff_t i) const {
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(f_.size());
        if (i < 0) return 3.0 * f_[0] - 3.0 * f_[1] + f_[2];
        if (i >= n) return 3.0 * f_[n - 1] - 3.0 * f_[n - 2] + f_[n - 3];
        return f_[static_cast<std::size_t>(i)];
    }

    double x0_ = 0.0, h_ = 1.0;
    std::vector<double> f_;
};

/// Tensor-product Catmull-Rom on a uniform 2D grid (row-major, x fastest).
class UniformCubic2D {
public:
    UniformCubic2D() = default;
    UniformCubic2D(double x0, double y0, double hx, double hy, std::size_t nx, std::size_t ny,
                   std::vector<double> f)
        : x0_(x0), y0_(y0), hx_(hx), hy_(hy), nx_(nx), ny_(ny), f_(std::move(f)) {
        if (nx_ < 4 || ny_ < 4 || f_.size() != nx_ * ny_)
            throw std::invalid_argument("UniformCubic2D: bad grid");
    }

    double operator()(double x, double y) const {
        double sx = (x - x0_) / hx_, sy = (y - y0_) / hy_;
        std::ptrdiff_t jx = std::clamp<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(std::floor(sx)), 0, static_cast<std::ptrdiff_t>(nx_) - 2);
        std::ptrdiff_t jy = std::clamp<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(std::floor(sy)), 0, static_cast<std::ptrdiff_t>(ny_) - 2);
        const double ux = sx - static_cast<double>(jx), uy = sy - static_cast<double>(jy);
        double rows[4];
        for (std::ptrdiff_t r = -1; r <= 2; ++r) {
            rows[r + 1] = detail::catmull_rom(fetch(jx - 1, jy + r), fetch(jx, jy + r),
                                              fetch(jx + 1, jy + r), fetch(jx + 2, jy + r), ux);
        }
        return detail::catmull_rom(rows[0], rows[1], rows[2], rows[3], uy);
    }

private:
    double at(std::ptrdiff_t i, std::ptrdiff_t j) const {
        return f_[static_cast<std::size_t>(j) * nx_ + static_cast<std::size_t>(i)];
    }

    double fetch(std::ptrdiff_t i, std::ptrdiff_t j) const {
        const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(nx_);
        const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(ny_);
        if (i < 0) return 3.0 * fetch(0, j) - 3.0 * fetch(1, j) + fetch(2, j);
        if (i >= nx) return 3.0 * fetch(nx - 1, j) - 3.0 * fetch(nx - 2, j) + fetch(nx - 3, j);
        if (j < 0) return 3.0 * at(i, 0) - 3.0 * at(i, 1) + at(i, 2);
        if (j >= ny) return 3.0 * at(i, ny - 1) - 3.0 * at(i, ny - 2) + at(i, ny - 3);
        return at(i, j);
    }

    double x0_ = 0.0, y0_ = 0.0, hx_ = 1.0, hy_ = 1.0;
    std::size_t nx_ = 0, ny_ = 0;
    std::vector<double> f_;
};

}  // namespace heatflow
