#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "heatflow/brenier.hpp"
#include "heatflow/common.hpp"
#include "heatflow/interpolate.hpp"
#include "heatflow/semigroup.hpp"

namespace heatflow {
namespace pde {

/// Advection field W = grad(-log f_t) sampled on a fixed window of the grid,
/// cubic in space and linear in time between snapshots. Queries are valid
/// only inside the window intersected with the core region
/// {f >= 1e-9 max f} of the bracketing snapshots; flows leaving that set are
/// flagged as escaped rather than extrapolated. Also carries the symmetrized
/// discrete Hessian of -log f_t for the variational (Jacobian) equation.
class AdvectionField1D {
public:
    AdvectionField1D(double window_lo, double window_hi)
        : req_lo_(window_lo), req_hi_(window_hi) {
        if (!(window_hi > window_lo))
            throw std::invalid_argument("AdvectionField1D: empty window");
    }

    /// Appends one snapshot. w_sup_override, when nonnegative, records the
    /// full-grid core sup of |W| (from evolve diagnostics); otherwise the sup
    /// is taken over the window only.
    void append(const GridField& f, double w_sup_override = -1.0) {
        const Grid& g = f.grid;
        if (g.dim != 1) throw std::invalid_argument("AdvectionField1D: 1D grid required");
        if (!init_) {
            auto lo = static_cast<std::ptrdiff_t>(std::ceil((req_lo_ - g.x0) / g.hx - 1e-9));
            auto hi = static_cast<std::ptrdiff_t>(std::floor((req_hi_ - g.x0) / g.hx + 1e-9));
            lo = std::max<std::ptrdiff_t>(lo, 1);
            hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(g.nx) - 2);
            if (hi - lo + 1 < 8)
                throw std::invalid_argument("AdvectionField1D: window too small for the grid");
            i0_ = static_cast<std::size_t>(lo);
            nw_ = static_cast<std::size_t>(hi - lo + 1);
            x0w_ = g.x(i0_);
            h_ = g.hx;
            gx0_ = g.x0;
            gnx_ = g.nx;
            init_ = true;
        } else {
            if (std::fabs(g.x0 - gx0_) > 1e-12 || std::fabs(g.hx - h_) > 1e-12 || g.nx != gnx_)
                throw std::invalid_argument("AdvectionField1D: snapshot grid changed");
            if (!times_.empty() && !(f.t > times_.back()))
                throw std::invalid_argument("AdvectionField1D: snapshot times must increase");
        }
        const double fmax = f.max_value();
        if (!(fmax > 0.0)) throw invariant_error("AdvectionField1D: empty core (field is zero)");
        const double thr = 1e-9 * fmax;

        auto z = [&](std::size_t i) {
            return -std::log(std::max(f.v[i], GridField::eps_floor));
        };
        std::vector<double> w(nw_), b(nw_);
        for (std::size_t j = 0; j < nw_; ++j) {
            const std::size_t i = i0_ + j;
            w[j] = (z(i + 1) - z(i - 1)) / (2.0 * h_);
            b[j] = (z(i + 1) - 2.0 * z(i) + z(i - 1)) / (h_ * h_);
        }
        std::size_t clo = 0, chi = g.nx - 1;
        while (clo < g.nx && f.v[clo] < thr) ++clo;
        while (chi > clo && f.v[chi] < thr) --chi;
        if (clo >= chi) throw invariant_error("AdvectionField1D: empty core");
        core_lo_.push_back(g.x(clo));
        core_hi_.push_back(g.x(chi));
        double wsup = w_sup_override;
        if (wsup < 0.0) {
            wsup = 0.0;
            for (std::size_t j = 0; j < nw_; ++j)
                if (f.v[i0_ + j] >= thr) wsup = std::max(wsup, std::fabs(w[j]));
        }
        w_sup_.push_back(wsup);
        times_.push_back(f.t);
        w_.emplace_back(x0w_, h_, std::move(w));
        b_.emplace_back(x0w_, h_, std::move(b));
    }

    std::size_t size() const { return times_.size(); }
    const std::vector<double>& times() const { return times_; }
    double t_front() const { return times_.front(); }
    double t_back() const { return times_.back(); }
    double window_lo() const { return x0w_; }
    double window_hi() const { return x0w_ + h_ * static_cast<double>(nw_ - 1); }
    double w_sup(std::size_t k) const { return w_sup_.at(k); }

    /// First snapshot time with core sup |W| below tol; empty if never.
    std::optional<std::size_t> first_index_below(double tol) const {
        for (std::size_t k = 0; k < w_sup_.size(); ++k)
            if (w_sup_[k] < tol) return k;
        return std::nullopt;
    }

    double velocity(double t, double x) const {
        const auto [k, c] = bracket(t);
        return (1.0 - c) * w_[k](x) + c * w_[k + 1](x);
    }

    double curvature(double t, double x) const {
        const auto [k, c] = bracket(t);
        return (1.0 - c) * b_[k](x) + c * b_[k + 1](x);
    }

    bool in_domain(double t, double x) const {
        if (x < window_lo() || x > window_hi()) return false;
        const auto [k, c] = bracket(t);
        (void)c;
        const double lo = std::max(core_lo_[k], core_lo_[k + 1]);
        const double hi = std::min(core_hi_[k], core_hi_[k + 1]);
        return x >= lo && x <= hi;
    }

private:
    std::pair<std::size_t, double> bracket(double t) const {
        if (times_.size() < 2) throw std::invalid_argument("AdvectionField1D: need 2 snapshots");
        const double span = times_.back() - times_.front();
        if (t < times_.front() - 1e-9 * span || t > times_.back() + 1e-9 * span)
            throw std::domain_error("AdvectionField1D: time outside snapshot range");
        const double tc = std::clamp(t, times_.front(), times_.back());
        auto it = std::upper_bound(times_.begin(), times_.end(), tc);
        std::size_t k = static_cast<std::size_t>(it - times_.begin());
        k = std::min(std::max<std::size_t>(k, 1), times_.size() - 1) - 1;
        const double c = (tc - times_[k]) / (times_[k + 1] - times_[k]);
        return {k, c};
    }

    double req_lo_, req_hi_;
    bool init_ = false;
    std::size_t i0_ = 0, nw_ = 0, gnx_ = 0;
    double x0w_ = 0.0, h_ = 1.0, gx0_ = 0.0;
    std::vector<double> times_, w_sup_, core_lo_, core_hi_;
    std::vector<UniformCubic1D> w_, b_;
};

/// Convenience builder from a complete snapshot list.
inline AdvectionField1D build_advection(double window_lo, double window_hi,
                                        const std::vector<GridField>& snapshots) {
    if (snapshots.size() < 2)
        throw std::invalid_argument("build_advection: need at least 2 time points");
    AdvectionField1D field(window_lo, window_hi);
    for (const auto& f : snapshots) field.append(f);
    return field;
}

/// Planar analog of AdvectionField1D: bicubic in space, linear in time, with
/// per-row core intervals (exact for convex cores).
class AdvectionField2D {
public:
    AdvectionField2D(double xlo, double xhi, double ylo, double yhi)
        : rxlo_(xlo), rxhi_(xhi), rylo_(ylo), ryhi_(yhi) {
        if (!(xhi > xlo) || !(yhi > ylo))
            throw std::invalid_argument("AdvectionField2D: empty window");
    }

    void append(const GridField& f, double w_sup_override = -1.0) {
        const Grid& g = f.grid;
        if (g.dim != 2) throw std::invalid_argument("AdvectionField2D: 2D grid required");
        if (!init_) {
            auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t lo, std::ptrdiff_t hi) {
                return std::max(lo, std::min(v, hi));
            };
            i0_ = static_cast<std::size_t>(clampi(
                static_cast<std::ptrdiff_t>(std::ceil((rxlo_ - g.x0) / g.hx - 1e-9)), 1,
                static_cast<std::ptrdiff_t>(g.nx) - 2));
            const std::size_t i1 = static_cast<std::size_t>(clampi(
                static_cast<std::ptrdiff_t>(std::floor((rxhi_ - g.x0) / g.hx + 1e-9)), 1,
                static_cast<std::ptrdiff_t>(g.nx) - 2));
            j0_ = static_cast<std::size_t>(clampi(
                static_cast<std::ptrdiff_t>(std::ceil((rylo_ - g.y0) / g.hy - 1e-9)), 1,
                static_cast<std::ptrdiff_t>(g.ny) - 2));
            const std::size_t j1 = static_cast<std::size_t>(clampi(
                static_cast<std::ptrdiff_t>(std::floor((ryhi_ - g.y0) / g.hy + 1e-9)), 1,
                static_cast<std::ptrdiff_t>(g.ny) - 2));
            if (i1 - i0_ + 1 < 8 || j1 - j0_ + 1 < 8)
                throw std::invalid_argument("AdvectionField2D: window too small for the grid");
            nwx_ = i1 - i0_ + 1;
            nwy_ = j1 - j0_ + 1;
            x0w_ = g.x(i0_);
            y0w_ = g.y(j0_);
            hx_ = g.hx;
            hy_ = g.hy;
            init_ = true;
        } else if (!times_.empty() && !(f.t > times_.back())) {
            throw std::invalid_argument("AdvectionField2D: snapshot times must increase");
        }
        const double fmax = f.max_value();
        if (!(fmax > 0.0)) throw invariant_error("AdvectionField2D: empty core (field is zero)");
        const double thr = 1e-9 * fmax;
        auto z = [&](std::size_t i, std::size_t j) {
            return -std::log(std::max(f.v[g.idx(i, j)], GridField::eps_floor));
        };
        std::vector<double> wx(nwx_ * nwy_), wy(nwx_ * nwy_), bxx(nwx_ * nwy_), bxy(nwx_ * nwy_),
            byy(nwx_ * nwy_);
        for (std::size_t jj = 0; jj < nwy_; ++jj)
            for (std::size_t ii = 0; ii < nwx_; ++ii) {
                const std::size_t i = i0_ + ii, j = j0_ + jj, k = jj * nwx_ + ii;
                wx[k] = (z(i + 1, j) - z(i - 1, j)) / (2.0 * hx_);
                wy[k] = (z(i, j + 1) - z(i, j - 1)) / (2.0 * hy_);
                bxx[k] = (z(i + 1, j) - 2.0 * z(i, j) + z(i - 1, j)) / (hx_ * hx_);
                byy[k] = (z(i, j + 1) - 2.0 * z(i, j) + z(i, j - 1)) / (hy_ * hy_);
                bxy[k] = (z(i + 1, j + 1) - z(i + 1, j - 1) - z(i - 1, j + 1) + z(i - 1, j - 1)) /
                         (4.0 * hx_ * hy_);
            }
        // Per-row core interval over the window rows.
        std::vector<double> rlo(nwy_), rhi(nwy_);
        bool any = false;
        for (std::size_t jj = 0; jj < nwy_; ++jj) {
            const std::size_t j = j0_ + jj;
            std::size_t a = 0, b = g.nx - 1;
            while (a < g.nx && f.v[g.idx(a, j)] < thr) ++a;
            while (b > a && f.v[g.idx(b, j)] < thr) --b;
            if (a < b) {
                rlo[jj] = g.x(a);
                rhi[jj] = g.x(b);
                any = true;
            } else {
                rlo[jj] = 1.0;
                rhi[jj] = -1.0;  // empty row
            }
        }
        if (!any) throw invariant_error("AdvectionField2D: empty core");
        double wsup = w_sup_override;
        if (wsup < 0.0) {
            wsup = 0.0;
            for (std::size_t jj = 0; jj < nwy_; ++jj)
                for (std::size_t ii = 0; ii < nwx_; ++ii)
                    if (f.v[g.idx(i0_ + ii, j0_ + jj)] >= thr)
                        wsup = std::max(wsup, std::hypot(wx[jj * nwx_ + ii], wy[jj * nwx_ + ii]));
        }
        w_sup_.push_back(wsup);
        times_.push_back(f.t);
        wx_.emplace_back(x0w_, y0w_, hx_, hy_, nwx_, nwy_, std::move(wx));
        wy_.emplace_back(x0w_, y0w_, hx_, hy_, nwx_, nwy_, std::move(wy));
        bxx_.emplace_back(x0w_, y0w_, hx_, hy_, nwx_, nwy_, std::move(bxx));
        bxy_.emplace_back(x0w_, y0w_, hx_, hy_, nwx_, nwy_, std::move(bxy));
        byy_.emplace_back(x0w_, y0w_, hx_, hy_, nwx_, nwy_, std::move(byy));
        row_lo_.push_back(std::move(rlo));
        row_hi_.push_back(std::move(rhi));
    }

    std::size_t size() const { return times_.size(); }
    const std::vector<double>& times() const { return times_; }
    double t_front() const { return times_.front(); }
    double t_back() const { return times_.back(); }
    double w_sup(std::size_t k) const { return w_sup_.at(k); }

    std::optional<std::size_t> first_index_below(double tol) const {
        for (std::size_t k = 0; k < w_sup_.size(); ++k)
            if (w_sup_[k] < tol) return k;
        return std::nullopt;
    }

    Eigen::Vector2d velocity(double t, const Eigen::Vector2d& p) const {
        const auto [k, c] = bracket(t);
        Eigen::Vector2d v;
        v(0) = (1.0 - c) * wx_[k](p(0), p(1)) + c * wx_[k + 1](p(0), p(1));
        v(1) = (1.0 - c) * wy_[k](p(0), p(1)) + c * wy_[k + 1](p(0), p(1));
        return v;
    }

    Eigen::Matrix2d curvature(double t, const Eigen::Vector2d& p) const {
        const auto [k, c] = bracket(t);
        const double xx = (1.0 - c) * bxx_[k](p(0), p(1)) + c * bxx_[k + 1](p(0), p(1));
        const double xy = (1.0 - c) * bxy_[k](p(0), p(1)) + c * bxy_[k + 1](p(0), p(1));
        const double yy = (1.0 - c) * byy_[k](p(0), p(1)) + c * byy_[k + 1](p(0), p(1));
        Eigen::Matrix2d m;
        m << xx, xy, xy, yy;
        return m;
    }

    bool in_domain(double t, const Eigen::Vector2d& p) const {
        if (p(0) < x0w_ || p(0) > x0w_ + hx_ * static_cast<double>(nwx_ - 1)) return false;
        if (p(1) < y0w_ || p(1) > y0w_ + hy_ * static_cast<double>(nwy_ - 1)) return false;
        const auto [k, c] = bracket(t);
        (void)c;
        for (std::size_t snap : {k, k + 1}) {
            const double fj = (p(1) - y0w_) / hy_;
            const auto j = static_cast<std::size_t>(std::clamp(
                fj, 0.0, static_cast<double>(nwy_ - 2)));
            for (std::size_t jj : {j, j + 1})
                if (p(0) < row_lo_[snap][jj] || p(0) > row_hi_[snap][jj]) return false;
        }
        return true;
    }

private:
    std::pair<std::size_t, double> bracket(double t) const {
        if (times_.size() < 2) throw std::invalid_argument("AdvectionField2D: need 2 snapshots");
        const double span = times_.back() - times_.front();
        if (t < times_.front() - 1e-9 * span || t > times_.back() + 1e-9 * span)
            throw std::domain_error("AdvectionField2D: time outside snapshot range");
        const double tc = std::clamp(t, times_.front(), times_.back());
        auto it = std::upper_bound(times_.begin(), times_.end(), tc);
        std::size_t k = static_cast<std::size_t>(it - times_.begin());
        k = std::min(std::max<std::size_t>(k, 1), times_.size() - 1) - 1;
        return {k, (tc - times_[k]) / (times_[k + 1] - times_[k])};
    }

    double rxlo_, rxhi_, rylo_, ryhi_;
    bool init_ = false;
    std::size_t i0_ = 0, j0_ = 0, nwx_ = 0, nwy_ = 0;
    double x0w_ = 0.0, y0w_ = 0.0, hx_ = 1.0, hy_ = 1.0;
    std::vector<double> times_, w_sup_;
    std::vector<UniformCubic2D> wx_, wy_, bxx_, bxy_, byy_;
    std::vector<std::vector<double>> row_lo_, row_hi_;
};

struct FlowOptions {
    double dt_max = 1e-3;        // RK4 substep cap
    bool track_jacobian = true;  // integrate the variational equation too
};

struct Track1D {
    double x0 = 0.0;     // seed
    double x = 0.0;      // final position
    double j = 1.0;      // final Jacobian (J_0 = 1)
    bool escaped = false;
    double escape_time = std::numeric_limits<double>::quiet_NaN();
};

struct FlowEnsemble1D {
    bool forward = true;
    double t_start = 0.0, t_end = 0.0;
    std::vector<Track1D> tracks;
    std::size_t escaped_count() const {
        std::size_t n = 0;
        for (const auto& t : tracks) n += t.escaped ? 1 : 0;
        return n;
    }
};

namespace detail {
/// RK4 on dx/dt = W(t,x), dJ/dt = B(t,x) J between t_from and t_to (either
/// direction), substepping at snapshot times. Escape freezes the track.
inline Track1D integrate_seed_1d(const AdvectionField1D& field, double seed, double t_from,
                                 double t_to, const FlowOptions& opt) {
    Track1D tr;
    tr.x0 = seed;
    tr.x = seed;
    if (!field.in_domain(t_from, seed)) {
        tr.escaped = true;
        tr.escape_time = t_from;
        return tr;
    }
    const bool fwd = t_to >= t_from;
    std::vector<double> nodes{t_from};
    for (double ts : field.times())
        if ((fwd && ts > t_from && ts < t_to) || (!fwd && ts < t_from && ts > t_to))
            nodes.push_back(ts);
    if (!fwd) std::sort(nodes.begin(), nodes.end(), std::greater<>());
    nodes.push_back(t_to);

    double t = t_from;
    for (std::size_t seg = 0; seg + 1 < nodes.size(); ++seg) {
        const double len = nodes[seg + 1] - nodes[seg];
        if (len == 0.0) continue;
        const auto nsub = static_cast<std::size_t>(
            std::ceil(std::fabs(len) / opt.dt_max - 1e-12));
        const double dt = len / static_cast<double>(std::max<std::size_t>(nsub, 1));
        for (std::size_t s = 0; s < std::max<std::size_t>(nsub, 1); ++s) {
            bool ok = true;
            auto vel = [&](double tt, double xx) {
                if (!ok) return 0.0;
                if (!field.in_domain(tt, xx)) {
                    ok = false;
                    return 0.0;
                }
                return field.velocity(tt, xx);
            };
            const double x0 = tr.x, j0 = tr.j;
            const double k1 = vel(t, x0);
            const double k2 = vel(t + 0.5 * dt, x0 + 0.5 * dt * k1);
            const double k3 = vel(t + 0.5 * dt, x0 + 0.5 * dt * k2);
            const double k4 = vel(t + dt, x0 + dt * k3);
            double nj = j0;
            if (opt.track_jacobian && ok) {
                const double b1 = field.curvature(t, x0);
                const double b2 = field.curvature(t + 0.5 * dt, x0 + 0.5 * dt * k1);
                const double b3 = field.curvature(t + 0.5 * dt, x0 + 0.5 * dt * k2);
                const double b4 = field.curvature(t + dt, x0 + dt * k3);
                const double K1 = b1 * j0;
                const double K2 = b2 * (j0 + 0.5 * dt * K1);
                const double K3 = b3 * (j0 + 0.5 * dt * K2);
                const double K4 = b4 * (j0 + dt * K3);
                nj = j0 + dt / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
            }
            const double nx = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!ok || !field.in_domain(t + dt, nx)) {
                tr.escaped = true;
                tr.escape_time = t;
                return tr;
            }
            tr.x = nx;
            tr.j = nj;
            t += dt;
        }
        t = nodes[seg + 1];
    }
    return tr;
}
}  // namespace detail

/// Flow map S: seeds at the first snapshot time, integrated to t_end.
inline FlowEnsemble1D integrate_forward(const AdvectionField1D& field,
                                        const std::vector<double>& seeds, double t_end,
                                        const FlowOptions& opt = {}) {
    FlowEnsemble1D ens;
    ens.forward = true;
    ens.t_start = field.t_front();
    ens.t_end = t_end;
    for (double s : seeds)
        ens.tracks.push_back(detail::integrate_seed_1d(field, s, field.t_front(), t_end, opt));
    return ens;
}

/// Inverse map T: seeds at time t, integrated back to the first snapshot.
inline FlowEnsemble1D integrate_backward(const AdvectionField1D& field,
                                         const std::vector<double>& seeds, double t,
                                         const FlowOptions& opt = {}) {
    FlowEnsemble1D ens;
    ens.forward = false;
    ens.t_start = t;
    ens.t_end = field.t_front();
    for (double s : seeds)
        ens.tracks.push_back(detail::integrate_seed_1d(field, s, t, field.t_front(), opt));
    return ens;
}

struct CertificateReport {
    double worst = 0.0;        // signed extreme of eig(J^T J - I)
    std::size_t used = 0;
    std::size_t escaped = 0;
};

/// Forward maps expand: min over seeds of J^2 - 1 must be >= -tol.
inline CertificateReport expansion_certificate(const FlowEnsemble1D& ens) {
    CertificateReport rep;
    rep.worst = std::numeric_limits<double>::infinity();
    for (const auto& tr : ens.tracks) {
        if (tr.escaped) {
            ++rep.escaped;
            continue;
        }
        ++rep.used;
        rep.worst = std::min(rep.worst, tr.j * tr.j - 1.0);
    }
    if (rep.used == 0) rep.worst = 0.0;
    return rep;
}

/// Backward maps contract: max over seeds of J^2 - 1 must be <= tol.
inline CertificateReport contraction_certificate(const FlowEnsemble1D& ens) {
    CertificateReport rep;
    rep.worst = -std::numeric_limits<double>::infinity();
    for (const auto& tr : ens.tracks) {
        if (tr.escaped) {
            ++rep.escaped;
            continue;
        }
        ++rep.used;
        rep.worst = std::max(rep.worst, tr.j * tr.j - 1.0);
    }
    if (rep.used == 0) rep.worst = 0.0;
    return rep;
}

/// Largest |T(x)-T(y)| / |x-y| over all pairs of non-escaped tracks.
inline double pairwise_lipschitz(const FlowEnsemble1D& ens) {
    double worst = 0.0;
    for (std::size_t i = 0; i < ens.tracks.size(); ++i) {
        if (ens.tracks[i].escaped) continue;
        for (std::size_t j = i + 1; j < ens.tracks.size(); ++j) {
            if (ens.tracks[j].escaped) continue;
            const double dx = std::fabs(ens.tracks[i].x0 - ens.tracks[j].x0);
            if (dx < 1e-14) continue;
            worst = std::max(worst, std::fabs(ens.tracks[i].x - ens.tracks[j].x) / dx);
        }
    }
    return worst;
}

/// sup |T_t(S_t(x)) - x| over non-escaped seeds.
inline double round_trip_error(const AdvectionField1D& field, const std::vector<double>& seeds,
                               double t, const FlowOptions& opt = {}) {
    auto fwd = integrate_forward(field, seeds, t, opt);
    std::vector<double> mid;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < fwd.tracks.size(); ++i)
        if (!fwd.tracks[i].escaped) {
            mid.push_back(fwd.tracks[i].x);
            keep.push_back(i);
        }
    auto bwd = integrate_backward(field, mid, t, opt);
    double worst = 0.0;
    for (std::size_t k = 0; k < keep.size(); ++k)
        if (!bwd.tracks[k].escaped)
            worst = std::max(worst, std::fabs(bwd.tracks[k].x - seeds[keep[k]]));
    return worst;
}

struct LimitMapResult {
    double t_star = 0.0;
    double residual_w_sup = 0.0;  // core sup |W| at t_star
    bool complete = false;        // stopping rule met within the snapshot range
    FlowEnsemble1D ensemble;      // backward tracks seeded at t_star

    std::vector<double> values() const {
        std::vector<double> v;
        v.reserve(ensemble.tracks.size());
        for (const auto& tr : ensemble.tracks) v.push_back(tr.x);
        return v;
    }
};

/// Transport map T = T_{t*} at the first snapshot time where the advection
/// field has decayed below stop_tol; flagged partial if that never happens.
inline LimitMapResult limit_map(const AdvectionField1D& field, const std::vector<double>& seeds,
                                double stop_tol, const FlowOptions& opt = {}) {
    LimitMapResult res;
    const auto idx = field.first_index_below(stop_tol);
    const std::size_t k = idx.value_or(field.size() - 1);
    res.complete = idx.has_value();
    res.t_star = field.times()[k];
    res.residual_w_sup = field.w_sup(k);
    res.ensemble = integrate_backward(field, seeds, res.t_star, opt);
    return res;
}

// ---------------------------------------------------------------------------
// Planar flow
// ---------------------------------------------------------------------------

struct Track2D {
    Eigen::Vector2d x0 = Eigen::Vector2d::Zero();
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    Eigen::Matrix2d j = Eigen::Matrix2d::Identity();
    bool escaped = false;
    double escape_time = std::numeric_limits<double>::quiet_NaN();
};

struct FlowEnsemble2D {
    bool forward = true;
    double t_start = 0.0, t_end = 0.0;
    std::vector<Track2D> tracks;
    std::size_t escaped_count() const {
        std::size_t n = 0;
        for (const auto& t : tracks) n += t.escaped ? 1 : 0;
        return n;
    }
};

namespace detail {
inline Track2D integrate_seed_2d(const AdvectionField2D& field, const Eigen::Vector2d& seed,
                                 double t_from, double t_to, const FlowOptions& opt) {
    Track2D tr;
    tr.x0 = seed;
    tr.x = seed;
    if (!field.in_domain(t_from, seed)) {
        tr.escaped = true;
        tr.escape_time = t_from;
        return tr;
    }
    const bool fwd = t_to >= t_from;
    std::vector<double> nodes{t_from};
    for (double ts : field.times())
        if ((fwd && ts > t_from && ts < t_to) || (!fwd && ts < t_from && ts > t_to))
            nodes.push_back(ts);
    if (!fwd) std::sort(nodes.begin(), nodes.end(), std::greater<>());
    nodes.push_back(t_to);

    double t = t_from;
    for (std::size_t seg = 0; seg + 1 < nodes.size(); ++seg) {
        const double len = nodes[seg + 1] - nodes[seg];
        if (len == 0.0) continue;
        const auto nsub =
            static_cast<std::size_t>(std::ceil(std::fabs(len) / opt.dt_max - 1e-12));
        const double dt = len / static_cast<double>(std::max<std::size_t>(nsub, 1));
        for (std::size_t s = 0; s < std::max<std::size_t>(nsub, 1); ++s) {
            bool ok = true;
            auto vel = [&](double tt, const Eigen::Vector2d& xx) -> Eigen::Vector2d {
                if (!ok) return Eigen::Vector2d::Zero();
                if (!field.in_domain(tt, xx)) {
                    ok = false;
                    return Eigen::Vector2d::Zero();
                }
                return field.velocity(tt, xx);
            };
            const Eigen::Vector2d x0 = tr.x;
            const Eigen::Matrix2d j0 = tr.j;
            const Eigen::Vector2d k1 = vel(t, x0);
            const Eigen::Vector2d k2 = vel(t + 0.5 * dt, x0 + 0.5 * dt * k1);
            const Eigen::Vector2d k3 = vel(t + 0.5 * dt, x0 + 0.5 * dt * k2);
            const Eigen::Vector2d k4 = vel(t + dt, x0 + dt * k3);
            Eigen::Matrix2d nj = j0;
            if (opt.track_jacobian && ok) {
                const Eigen::Matrix2d b1 = field.curvature(t, x0);
                const Eigen::Matrix2d b2 = field.curvature(t + 0.5 * dt, x0 + 0.5 * dt * k1);
                const Eigen::Matrix2d b3 = field.curvature(t + 0.5 * dt, x0 + 0.5 * dt * k2);
                const Eigen::Matrix2d b4 = field.curvature(t + dt, x0 + dt * k3);
                const Eigen::Matrix2d K1 = b1 * j0;
                const Eigen::Matrix2d K2 = b2 * (j0 + 0.5 * dt * K1);
                const Eigen::Matrix2d K3 = b3 * (j0 + 0.5 * dt * K2);
                const Eigen::Matrix2d K4 = b4 * (j0 + dt * K3);
                nj = j0 + dt / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
            }
            const Eigen::Vector2d nx = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!ok || !field.in_domain(t + dt, nx)) {
                tr.escaped = true;
                tr.escape_time = t;
                return tr;
            }
            tr.x = nx;
            tr.j = nj;
            t += dt;
        }
        t = nodes[seg + 1];
    }
    return tr;
}
}  // namespace detail

inline FlowEnsemble2D integrate_forward(const AdvectionField2D& field,
                                        const std::vector<Eigen::Vector2d>& seeds, double t_end,
                                        const FlowOptions& opt = {}) {
    FlowEnsemble2D ens;
    ens.forward = true;
    ens.t_start = field.t_front();
    ens.t_end = t_end;
    for (const auto& s : seeds)
        ens.tracks.push_back(detail::integrate_seed_2d(field, s, field.t_front(), t_end, opt));
    return ens;
}

inline FlowEnsemble2D integrate_backward(const AdvectionField2D& field,
                                         const std::vector<Eigen::Vector2d>& seeds, double t,
                                         const FlowOptions& opt = {}) {
    FlowEnsemble2D ens;
    ens.forward = false;
    ens.t_start = t;
    ens.t_end = field.t_front();
    for (const auto& s : seeds)
        ens.tracks.push_back(detail::integrate_seed_2d(field, s, t, field.t_front(), opt));
    return ens;
}

inline CertificateReport expansion_certificate(const FlowEnsemble2D& ens) {
    CertificateReport rep;
    rep.worst = std::numeric_limits<double>::infinity();
    for (const auto& tr : ens.tracks) {
        if (tr.escaped) {
            ++rep.escaped;
            continue;
        }
        ++rep.used;
        const Eigen::Matrix2d g = tr.j.transpose() * tr.j - Eigen::Matrix2d::Identity();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g);
        rep.worst = std::min(rep.worst, es.eigenvalues().minCoeff());
    }
    if (rep.used == 0) rep.worst = 0.0;
    return rep;
}

inline CertificateReport contraction_certificate(const FlowEnsemble2D& ens) {
    CertificateReport rep;
    rep.worst = -std::numeric_limits<double>::infinity();
    for (const auto& tr : ens.tracks) {
        if (tr.escaped) {
            ++rep.escaped;
            continue;
        }
        ++rep.used;
        const Eigen::Matrix2d g = tr.j.transpose() * tr.j - Eigen::Matrix2d::Identity();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g);
        rep.worst = std::max(rep.worst, es.eigenvalues().maxCoeff());
    }
    if (rep.used == 0) rep.worst = 0.0;
    return rep;
}

/// Asymmetry diagnostic max |J - J^T| over tracks; recorded, never asserted.
inline double jacobian_asymmetry(const FlowEnsemble2D& ens) {
    double worst = 0.0;
    for (const auto& tr : ens.tracks)
        if (!tr.escaped) worst = std::max(worst, std::fabs(tr.j(0, 1) - tr.j(1, 0)));
    return worst;
}

struct LimitMapResult2D {
    double t_star = 0.0;
    double residual_w_sup = 0.0;
    bool complete = false;
    FlowEnsemble2D ensemble;
};

inline LimitMapResult2D limit_map(const AdvectionField2D& field,
                                  const std::vector<Eigen::Vector2d>& seeds, double stop_tol,
                                  const FlowOptions& opt = {}) {
    LimitMapResult2D res;
    const auto idx = field.first_index_below(stop_tol);
    const std::size_t k = idx.value_or(field.size() - 1);
    res.complete = idx.has_value();
    res.t_star = field.times()[k];
    res.residual_w_sup = field.w_sup(k);
    res.ensemble = integrate_backward(field, seeds, res.t_star, opt);
    return res;
}

// ---------------------------------------------------------------------------
// Push-forward residuals
// ---------------------------------------------------------------------------

/// 1D residual sup_j |F_target(T(x_j)) - F_source(x_j)| over map samples;
/// both CDFs come from quadrature of the (auto-normalized) densities.
inline double pushforward_residual(const std::vector<double>& xs, const std::vector<double>& txs,
                                   const Density1D& source, const Density1D& target) {
    if (xs.size() != txs.size())
        throw std::invalid_argument("pushforward_residual: sample size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        worst = std::max(worst, std::fabs(target.cdf(txs[i]) - source.cdf(xs[i])));
    return worst;
}

struct TwoSampleReport {
    double ks_x = 0.0;
    double ks_y = 0.0;
    double energy_distance = 0.0;  // squared energy distance (nonnegative)
    double statistic() const { return std::max(ks_x, ks_y); }
};

namespace detail {
inline double two_sample_ks(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double worst = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        const double fa = static_cast<double>(i) / static_cast<double>(a.size());
        const double fb = static_cast<double>(j) / static_cast<double>(b.size());
        worst = std::max(worst, std::fabs(fa - fb));
    }
    return worst;
}
}  // namespace detail

/// Projection Kolmogorov-Smirnov statistics plus the squared energy distance
/// between pushed samples and target samples.
inline TwoSampleReport pushforward_residual_2d(const std::vector<Eigen::Vector2d>& pushed,
                                               const std::vector<Eigen::Vector2d>& target) {
    if (pushed.empty() || target.empty())
        throw std::invalid_argument("pushforward_residual_2d: empty sample set");
    TwoSampleReport rep;
    std::vector<double> ax, ay, bx, by;
    for (const auto& p : pushed) {
        ax.push_back(p(0));
        ay.push_back(p(1));
    }
    for (const auto& p : target) {
        bx.push_back(p(0));
        by.push_back(p(1));
    }
    rep.ks_x = detail::two_sample_ks(ax, bx);
    rep.ks_y = detail::two_sample_ks(ay, by);

    const std::size_t n = pushed.size(), m = target.size();
    double cross = 0.0, self_a = 0.0, self_b = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) cross += (pushed[i] - target[j]).norm();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) self_a += (pushed[i] - pushed[j]).norm();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) self_b += (target[i] - target[j]).norm();
    rep.energy_distance = 2.0 * cross / (static_cast<double>(n) * static_cast<double>(m)) -
                          2.0 * self_a / (static_cast<double>(n) * static_cast<double>(n)) -
                          2.0 * self_b / (static_cast<double>(m) * static_cast<double>(m));
    return rep;
}

// ---------------------------------------------------------------------------
// Log-concavity monitoring and continuity residual
// ---------------------------------------------------------------------------

/// Streams snapshots and records the minimum discrete-Hessian eigenvalue of
/// -log f_t over the core. Radial mode adds the tangential eigenvalue
/// (-log g)'(r)/r of the ambient rotationally invariant extension.
class LogconcavityMonitor {
public:
    enum class Mode { cartesian, radial };

    explicit LogconcavityMonitor(Mode mode = Mode::cartesian, int ambient_n = 1)
        : mode_(mode), ambient_n_(ambient_n) {
        if (mode_ == Mode::radial && ambient_n_ < 2)
            throw std::invalid_argument("LogconcavityMonitor: radial mode needs ambient n >= 2");
    }

    void observe(const GridField& f) {
        const Grid& g = f.grid;
        const double fmax = f.max_value();
        if (!(fmax > 0.0)) throw invariant_error("LogconcavityMonitor: empty core");
        const double thr = 1e-9 * fmax;
        auto z1 = [&](std::size_t i) {
            return -std::log(std::max(f.v[i], GridField::eps_floor));
        };
        double best = std::numeric_limits<double>::infinity();
        if (g.dim == 1) {
            for (std::size_t i = 1; i + 1 < g.nx; ++i) {
                if (f.v[i] < thr) continue;
                const double zxx = (z1(i + 1) - 2.0 * z1(i) + z1(i - 1)) / (g.hx * g.hx);
                best = std::min(best, zxx);
                if (mode_ == Mode::radial) {
                    const double zr = (z1(i + 1) - z1(i - 1)) / (2.0 * g.hx);
                    best = std::min(best, zr / g.x(i));
                }
            }
        } else {
            auto z = [&](std::size_t i, std::size_t j) {
                return -std::log(std::max(f.v[g.idx(i, j)], GridField::eps_floor));
            };
            for (std::size_t j = 1; j + 1 < g.ny; ++j)
                for (std::size_t i = 1; i + 1 < g.nx; ++i) {
                    if (f.v[g.idx(i, j)] < thr) continue;
                    const double zxx = (z(i + 1, j) - 2.0 * z(i, j) + z(i - 1, j)) / (g.hx * g.hx);
                    const double zyy = (z(i, j + 1) - 2.0 * z(i, j) + z(i, j - 1)) / (g.hy * g.hy);
                    const double zxy =
                        (z(i + 1, j + 1) - z(i + 1, j - 1) - z(i - 1, j + 1) + z(i - 1, j - 1)) /
                        (4.0 * g.hx * g.hy);
                    const double tr = zxx + zyy;
                    const double disc = std::sqrt(math_sq(zxx - zyy) + 4.0 * zxy * zxy);
                    best = std::min(best, 0.5 * (tr - disc));
                }
        }
        series_.emplace_back(f.t, best);
        min_eig_ = std::min(min_eig_, best);
    }

    const std::vector<std::pair<double, double>>& series() const { return series_; }
    double min_eigenvalue() const { return min_eig_; }
    bool pass(double tol) const { return min_eig_ >= -tol; }

private:
    static double math_sq(double v) { return v * v; }
    Mode mode_;
    int ambient_n_;
    std::vector<std::pair<double, double>> series_;
    double min_eig_ = std::numeric_limits<double>::infinity();
};

/// Density-form continuity residual between consecutive snapshots:
/// max_i m_i |(f_b - f_a)/dt - L(f_a + f_b)/2|, the flux-form statement that
/// the pair solves the transport equation between its times.
inline double continuity_residual(const Stepper1D& st, const GridField& a, const GridField& b) {
    if (!(b.t > a.t)) throw std::invalid_argument("continuity_residual: need increasing times");
    const double dt = b.t - a.t;
    std::vector<double> la, lb;
    st.apply_generator(a.v, la);
    st.apply_generator(b.v, lb);
    const auto& m = st.mu_weights();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double r = (b.v[i] - a.v[i]) / dt - 0.5 * (la[i] + lb[i]);
        worst = std::max(worst, m[i] * std::fabs(r));
    }
    return worst;
}

inline double continuity_residual(const Stepper2D& st, const GridField& a, const GridField& b) {
    if (!(b.t > a.t)) throw std::invalid_argument("continuity_residual: need increasing times");
    const double dt = b.t - a.t;
    std::vector<double> la, lb;
    st.apply_generator(a.v, la);
    st.apply_generator(b.v, lb);
    const auto& m = st.mu_weights();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double r = (b.v[i] - a.v[i]) / dt - 0.5 * (la[i] + lb[i]);
        worst = std::max(worst, m[i] * std::fabs(r));
    }
    return worst;
}

}  // namespace pde
}  // namespace heatflow
