#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "heatflow/common.hpp"
#include "heatflow/rng.hpp"

namespace heatflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Orthogonal split R^n = E0 + E1 + ... + Ek with coordinate-aligned blocks:
/// E0 holds the first dim_e0 coordinates, block i the next block_dims[i].
/// A fixed orthogonal change of basis reduces the general case to this one.
class SubspaceDecomposition {
public:
    SubspaceDecomposition(int dim_e0, std::vector<int> block_dims)
        : dim_e0_(dim_e0), block_dims_(std::move(block_dims)) {
        if (dim_e0_ < 0) throw std::invalid_argument("decomposition: dim_e0 < 0");
        offsets_.reserve(block_dims_.size());
        int off = dim_e0_;
        for (int d : block_dims_) {
            if (d < 1) throw std::invalid_argument("decomposition: block dim < 1");
            offsets_.push_back(off);
            off += d;
        }
        dim_total_ = off;
        if (dim_total_ < 1) throw std::invalid_argument("decomposition: empty space");
    }

    int dim_e0() const { return dim_e0_; }
    int dim_total() const { return dim_total_; }
    int num_blocks() const { return static_cast<int>(block_dims_.size()); }
    int block_dim(int i) const { return block_dims_.at(static_cast<std::size_t>(i)); }
    int block_offset(int i) const { return offsets_.at(static_cast<std::size_t>(i)); }

    Eigen::VectorBlock<const VectorXd> e0(const VectorXd& x) const { return x.segment(0, dim_e0_); }
    Eigen::VectorBlock<const VectorXd> block(const VectorXd& x, int i) const {
        return x.segment(block_offset(i), block_dim(i));
    }

private:
    int dim_e0_;
    std::vector<int> block_dims_;
    std::vector<int> offsets_;
    int dim_total_ = 0;
};

/// Q(x) = <Ax, x> + <b, x> + c with A symmetric positive definite.
class QuadraticForm {
public:
    QuadraticForm(MatrixXd a, VectorXd b, double c) : a_(std::move(a)), b_(std::move(b)), c_(c) {
        if (a_.rows() != a_.cols() || a_.rows() != b_.size())
            throw std::invalid_argument("QuadraticForm: inconsistent sizes");
        if (a_.size() > 0) {
            const double asym = (a_ - a_.transpose()).cwiseAbs().maxCoeff();
            if (asym > 1e-12) throw std::invalid_argument("QuadraticForm: A not symmetric");
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(a_);
            if (es.eigenvalues().minCoeff() <= 0.0)
                throw std::invalid_argument("QuadraticForm: A not positive definite");
        }
    }

    static QuadraticForm isotropic(int dim, double coeff) {
        return QuadraticForm(coeff * MatrixXd::Identity(dim, dim), VectorXd::Zero(dim), 0.0);
    }

    double value(const VectorXd& x) const { return x.dot(a_ * x) + b_.dot(x) + c_; }
    VectorXd gradient(const VectorXd& x) const { return 2.0 * (a_ * x) + b_; }
    const MatrixXd& matrix() const { return a_; }
    MatrixXd hessian() const { return 2.0 * a_; }
    const VectorXd& linear() const { return b_; }
    double constant() const { return c_; }
    bool centered() const { return b_.size() == 0 || b_.cwiseAbs().maxCoeff() == 0.0; }

private:
    MatrixXd a_;
    VectorXd b_;
    double c_;
};

/// One-dimensional radial profile rho with derivatives up to third order.
/// Required shape: rho'(0) = 0 (when smooth), rho'' >= 0, rho''' <= 0 on
/// [0, r_max], and the derived bound rho''(t) <= rho'(t)/t.
class RadialProfile {
public:
    using Fn = std::function<double(double)>;

    RadialProfile(std::string name, Fn rho, Fn drho, Fn d2rho, Fn d3rho, double r_max,
                  bool smooth_at_origin = true)
        : name_(std::move(name)),
          rho_(std::move(rho)),
          drho_(std::move(drho)),
          d2rho_(std::move(d2rho)),
          d3rho_(std::move(d3rho)),
          r_max_(r_max),
          smooth_(smooth_at_origin) {
        if (!(r_max_ > 0.0)) throw std::invalid_argument("RadialProfile: r_max <= 0");
    }

    const std::string& name() const { return name_; }
    double r_max() const { return r_max_; }
    bool smooth_at_origin() const { return smooth_; }

    double rho(double r) const { return rho_(check(r)); }
    double drho(double r) const { return drho_(check(r)); }
    double d2rho(double r) const { return d2rho_(check(r)); }
    double d3rho(double r) const { return d3rho_(check(r)); }

    /// Shape validation on a uniform mesh; tolerance 1e-10 on every inequality.
    void validate(int mesh = 2048, double tol = 1e-10) const {
        if (smooth_ && std::fabs(drho_(0.0)) > tol)
            throw invariant_error(name_ + ": rho'(0) != 0");
        const double lo = smooth_ ? 0.0 : r_max_ / mesh;
        for (int j = 0; j <= mesh; ++j) {
            const double t = lo + (r_max_ - lo) * static_cast<double>(j) / mesh;
            if (d2rho_(t) < -tol)
                throw invariant_error(name_ + ": rho'' < 0 at t=" + format_double(t));
            if (d3rho_(t) > tol)
                throw invariant_error(name_ + ": rho''' > 0 at t=" + format_double(t));
            if (t > 0.0 && d2rho_(t) > drho_(t) / t + tol)
                throw invariant_error(name_ + ": rho'' > rho'/t at t=" + format_double(t));
        }
    }

    // --- catalog ---

    static RadialProfile quadratic(double r_max = 64.0) {
        return RadialProfile(
            "quadratic", [](double r) { return 0.5 * r * r; }, [](double r) { return r; },
            [](double) { return 1.0; }, [](double) { return 0.0; }, r_max);
    }

    static RadialProfile log_cosh(double r_max = 64.0) {
        // log cosh r evaluated as |r| + log((1+e^{-2|r|})/2) to avoid overflow.
        auto rho = [](double r) {
            const double a = std::fabs(r);
            return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
        };
        auto sech2 = [](double r) { return sq(1.0 / std::cosh(std::min(r, 350.0))); };
        return RadialProfile(
            "log_cosh", rho, [](double r) { return std::tanh(r); }, sech2,
            [sech2](double r) { return -2.0 * sech2(r) * std::tanh(r); }, r_max);
    }

    static RadialProfile sqrt_shift(double r_max = 64.0) {
        return RadialProfile(
            "sqrt_shift", [](double r) { return std::sqrt(1.0 + r * r) - 1.0; },
            [](double r) { return r / std::sqrt(1.0 + r * r); },
            [](double r) { return std::pow(1.0 + r * r, -1.5); },
            [](double r) { return -3.0 * r * std::pow(1.0 + r * r, -2.5); }, r_max);
    }

    /// |r|^p, p in [1,2]; not C^1 at the origin for p < 2, so it is excluded
    /// from grid-PDE paths and only serves quadrature-based constructions.
    static RadialProfile power(double p, double r_max = 64.0) {
        if (p < 1.0 || p > 2.0) throw std::invalid_argument("power profile: p outside [1,2]");
        const bool smooth = (p == 2.0);
        return RadialProfile(
            "power_" + format_double(p), [p](double r) { return std::pow(r, p); },
            [p](double r) { return p * std::pow(r, p - 1.0); },
            [p](double r) { return p * (p - 1.0) * std::pow(r, p - 2.0); },
            [p](double r) { return p * (p - 1.0) * (p - 2.0) * std::pow(r, p - 3.0); }, r_max,
            smooth);
    }

    static RadialProfile by_name(const std::string& name, double param, double r_max = 64.0) {
        if (name == "quadratic") return quadratic(r_max);
        if (name == "log_cosh") return log_cosh(r_max);
        if (name == "sqrt_shift") return sqrt_shift(r_max);
        if (name == "power") return power(param, r_max);
        throw schema_error("unknown radial profile: " + name);
    }

private:
    double check(double r) const {
        if (!(r >= 0.0)) throw std::domain_error(name_ + ": negative radius");
        if (r > r_max_ * (1.0 + 1e-12))
            throw std::domain_error(name_ + ": radius " + format_double(r) + " beyond r_max");
        return r;
    }

    std::string name_;
    Fn rho_, drho_, d2rho_, d3rho_;
    double r_max_;
    bool smooth_;
};

/// Value, gradient and Hessian bundle returned by eval_derivatives.
struct Derivatives {
    double value = 0.0;
    VectorXd gradient;
    MatrixXd hessian;
    int order = 0;
};

/// U(x) = Q(x_E0) + sum_i rho_i(|x_i|): the structured class whose heat flow
/// the library studies. Blocks below `origin_radius` use even-extension
/// limits (gradient 0, Hessian rho''(0) Id).
class StructuredPotential {
public:
    StructuredPotential(SubspaceDecomposition decomp, std::optional<QuadraticForm> quad,
                        std::vector<RadialProfile> profiles)
        : decomp_(std::move(decomp)), quad_(std::move(quad)), profiles_(std::move(profiles)) {
        if (static_cast<int>(profiles_.size()) != decomp_.num_blocks())
            throw std::invalid_argument("StructuredPotential: one profile per block required");
        if (decomp_.dim_e0() > 0) {
            if (!quad_ || quad_->matrix().rows() != decomp_.dim_e0())
                throw std::invalid_argument("StructuredPotential: quadratic part missing or mis-sized");
        } else if (quad_) {
            throw std::invalid_argument("StructuredPotential: quadratic part without E0");
        }
        for (const auto& p : profiles_) p.validate();
    }

    const SubspaceDecomposition& decomposition() const { return decomp_; }
    const std::optional<QuadraticForm>& quadratic_part() const { return quad_; }
    const RadialProfile& profile(int i) const { return profiles_.at(static_cast<std::size_t>(i)); }
    bool smooth() const {
        for (const auto& p : profiles_)
            if (!p.smooth_at_origin()) return false;
        return true;
    }

    double value(const VectorXd& x) const {
        check_dim(x);
        double v = quad_ ? quad_->value(decomp_.e0(x)) : 0.0;
        for (int i = 0; i < decomp_.num_blocks(); ++i)
            v += profiles_[static_cast<std::size_t>(i)].rho(decomp_.block(x, i).norm());
        return v;
    }

    VectorXd gradient(const VectorXd& x) const {
        check_dim(x);
        VectorXd g = VectorXd::Zero(decomp_.dim_total());
        if (quad_) g.segment(0, decomp_.dim_e0()) = quad_->gradient(decomp_.e0(x));
        for (int i = 0; i < decomp_.num_blocks(); ++i) {
            const auto xi = decomp_.block(x, i);
            const double r = xi.norm();
            const auto& p = profiles_[static_cast<std::size_t>(i)];
            if (r < origin_radius) {
                require_smooth(p);
                continue;  // rho'(0) = 0
            }
            g.segment(decomp_.block_offset(i), decomp_.block_dim(i)) = (p.drho(r) / r) * xi;
        }
        return g;
    }

    MatrixXd hessian(const VectorXd& x) const {
        check_dim(x);
        const int n = decomp_.dim_total();
        MatrixXd h = MatrixXd::Zero(n, n);
        if (quad_) h.topLeftCorner(decomp_.dim_e0(), decomp_.dim_e0()) = quad_->hessian();
        for (int i = 0; i < decomp_.num_blocks(); ++i) {
            const auto xi = decomp_.block(x, i);
            const double r = xi.norm();
            const int off = decomp_.block_offset(i), d = decomp_.block_dim(i);
            const auto& p = profiles_[static_cast<std::size_t>(i)];
            if (r < origin_radius) {
                require_smooth(p);
                h.block(off, off, d, d) = p.d2rho(0.0) * MatrixXd::Identity(d, d);
                continue;
            }
            const VectorXd u = xi / r;
            const MatrixXd proj = u * u.transpose();
            h.block(off, off, d, d) =
                p.d2rho(r) * proj + (p.drho(r) / r) * (MatrixXd::Identity(d, d) - proj);
        }
        return h;
    }

    Derivatives eval_derivatives(const VectorXd& x, int order) const {
        if (order < 0 || order > 2) throw std::invalid_argument("eval_derivatives: order must be 0..2");
        Derivatives d;
        d.order = order;
        d.value = value(x);
        if (order >= 1) d.gradient = gradient(x);
        if (order >= 2) d.hessian = hessian(x);
        return d;
    }

    /// Trilinear form D^3 U (xi, xi, theta). The quadratic part vanishes; each
    /// radial block contributes
    ///   rho'''(r) (u.z)^2 (w.z)
    ///   + (rho''(r) - rho'(r)/r)/r [ 2(u.z)(u.w - (u.z)(w.z)) + (w.z)(|u|^2 - (u.z)^2) ]
    /// with z the unit radial direction; the contribution vanishes at a block
    /// origin of a C^3 even profile.
    double third_form(const VectorXd& x, const VectorXd& xi, const VectorXd& theta) const {
        check_dim(x);
        check_dim(xi);
        check_dim(theta);
        double total = 0.0;
        for (int i = 0; i < decomp_.num_blocks(); ++i) {
            const auto zi = decomp_.block(x, i);
            const auto ui = decomp_.block(xi, i);
            const auto wi = decomp_.block(theta, i);
            const double r = zi.norm();
            const auto& p = profiles_[static_cast<std::size_t>(i)];
            if (r < origin_radius) {
                require_smooth(p);
                continue;
            }
            const VectorXd z = zi / r;
            const double uz = z.dot(ui), wz = z.dot(wi);
            const double uu = ui.squaredNorm(), uw = ui.dot(wi);
            const double g = (p.d2rho(r) - p.drho(r) / r) / r;
            total += p.d3rho(r) * uz * uz * wz +
                     g * (2.0 * uz * (uw - uz * wz) + wz * (uu - uz * uz));
        }
        return total;
    }

    static constexpr double origin_radius = 1e-13;

private:
    void check_dim(const VectorXd& x) const {
        if (x.size() != decomp_.dim_total())
            throw std::invalid_argument("StructuredPotential: wrong dimension");
    }
    static void require_smooth(const RadialProfile& p) {
        if (!p.smooth_at_origin())
            throw std::domain_error(p.name() + ": derivative at block origin undefined");
    }

    SubspaceDecomposition decomp_;
    std::optional<QuadraticForm> quad_;
    std::vector<RadialProfile> profiles_;
};

/// Element of the symmetry group O(E1) x ... x O(Ek): orthogonal action on one
/// block, identity elsewhere. Reflections are R = -Id on the block.
class GroupElement {
public:
    GroupElement(int block_index, MatrixXd rotation)
        : block_(block_index), rot_(std::move(rotation)) {
        if (rot_.rows() != rot_.cols()) throw std::invalid_argument("GroupElement: non-square");
        const double res =
            (rot_.transpose() * rot_ - MatrixXd::Identity(rot_.rows(), rot_.cols()))
                .cwiseAbs()
                .maxCoeff();
        if (res > 1e-12) throw std::invalid_argument("GroupElement: matrix not orthogonal");
    }

    static GroupElement reflection(const SubspaceDecomposition& d, int block) {
        return GroupElement(block, -MatrixXd::Identity(d.block_dim(block), d.block_dim(block)));
    }

    static GroupElement random_rotation(const SubspaceDecomposition& d, int block, Rng& rng) {
        const int n = d.block_dim(block);
        MatrixXd g(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
        Eigen::HouseholderQR<MatrixXd> qr(g);
        MatrixXd q = qr.householderQ();
        // Fix the sign convention so Q is a deterministic function of g.
        MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int j = 0; j < n; ++j)
            if (r(j, j) < 0.0) q.col(j) *= -1.0;
        return GroupElement(block, q);
    }

    int block() const { return block_; }

    VectorXd apply(const SubspaceDecomposition& d, const VectorXd& x) const {
        if (d.block_dim(block_) != rot_.rows())
            throw std::invalid_argument("GroupElement: block size mismatch");
        VectorXd y = x;
        y.segment(d.block_offset(block_), d.block_dim(block_)) =
            rot_ * x.segment(d.block_offset(block_), d.block_dim(block_));
        return y;
    }

private:
    int block_;
    MatrixXd rot_;
};

/// Convex potential invariant under the block symmetry group, stored through
/// its reduced representation Phi(y0, r_1..r_k) with y0 the E0 coordinates and
/// r_i = |x_i|. Gradients are assembled by the chain rule; each dPhi/dr_i must
/// vanish as r_i -> 0 for the full-space gradient to exist there.
class SymmetricConvexPotential {
public:
    using ReducedFn = std::function<double(const VectorXd&, const std::vector<double>&)>;
    using ReducedGrad0 = std::function<VectorXd(const VectorXd&, const std::vector<double>&)>;
    using ReducedGradR = std::function<std::vector<double>(const VectorXd&, const std::vector<double>&)>;

    SymmetricConvexPotential(SubspaceDecomposition decomp, ReducedFn value, ReducedGrad0 grad0,
                             ReducedGradR gradr, std::string name = "custom")
        : decomp_(std::move(decomp)),
          value_(std::move(value)),
          grad0_(std::move(grad0)),
          gradr_(std::move(gradr)),
          name_(std::move(name)) {}

    /// V(x) = rho(|x|) for a convex non-decreasing profile; invariant under the
    /// full orthogonal group, hence under any block decomposition.
    static SymmetricConvexPotential isotropic(SubspaceDecomposition decomp, RadialProfile prof) {
        auto norm_of = [](const VectorXd& y0, const std::vector<double>& r) {
            double s = y0.squaredNorm();
            for (double ri : r) s += ri * ri;
            return std::sqrt(s);
        };
        auto p = std::make_shared<RadialProfile>(std::move(prof));
        std::string name = "isotropic_" + p->name();
        return SymmetricConvexPotential(
            std::move(decomp),
            [p, norm_of](const VectorXd& y0, const std::vector<double>& r) {
                return p->rho(norm_of(y0, r));
            },
            [p, norm_of](const VectorXd& y0, const std::vector<double>& r) -> VectorXd {
                const double t = norm_of(y0, r);
                if (t < StructuredPotential::origin_radius) return VectorXd::Zero(y0.size());
                return (p->drho(t) / t) * y0;
            },
            [p, norm_of](const VectorXd& y0, const std::vector<double>& r) {
                const double t = norm_of(y0, r);
                std::vector<double> g(r.size(), 0.0);
                if (t < StructuredPotential::origin_radius) return g;
                for (std::size_t i = 0; i < r.size(); ++i) g[i] = (p->drho(t) / t) * r[i];
                return g;
            },
            std::move(name));
    }

    /// V(x) = (q0/2)|x_E0|^2 + sum_i v_i(|x_i|) from per-block convex profiles.
    static SymmetricConvexPotential per_block(SubspaceDecomposition decomp, double q0,
                                              std::vector<RadialProfile> profiles) {
        if (static_cast<int>(profiles.size()) != decomp.num_blocks())
            throw std::invalid_argument("per_block: one profile per block required");
        auto ps = std::make_shared<std::vector<RadialProfile>>(std::move(profiles));
        return SymmetricConvexPotential(
            std::move(decomp),
            [ps, q0](const VectorXd& y0, const std::vector<double>& r) {
                double v = 0.5 * q0 * y0.squaredNorm();
                for (std::size_t i = 0; i < r.size(); ++i) v += (*ps)[i].rho(r[i]);
                return v;
            },
            [q0](const VectorXd& y0, const std::vector<double>&) -> VectorXd { return q0 * y0; },
            [ps](const VectorXd&, const std::vector<double>& r) {
                std::vector<double> g(r.size());
                for (std::size_t i = 0; i < r.size(); ++i) g[i] = (*ps)[i].drho(r[i]);
                return g;
            },
            "per_block");
    }

    const SubspaceDecomposition& decomposition() const { return decomp_; }
    const std::string& name() const { return name_; }

    double value(const VectorXd& x) const {
        auto [y0, r] = reduce(x);
        return value_(y0, r);
    }

    VectorXd gradient(const VectorXd& x) const {
        auto [y0, r] = reduce(x);
        VectorXd g = VectorXd::Zero(decomp_.dim_total());
        if (decomp_.dim_e0() > 0) g.segment(0, decomp_.dim_e0()) = grad0_(y0, r);
        const std::vector<double> gr = gradr_(y0, r);
        for (int i = 0; i < decomp_.num_blocks(); ++i) {
            const auto xi = decomp_.block(x, i);
            const double ri = r[static_cast<std::size_t>(i)];
            if (ri < StructuredPotential::origin_radius) {
                if (std::fabs(gr[static_cast<std::size_t>(i)]) > 1e-9)
                    throw std::domain_error(name_ + ": gradient singular at block origin");
                continue;
            }
            g.segment(decomp_.block_offset(i), decomp_.block_dim(i)) =
                (gr[static_cast<std::size_t>(i)] / ri) * xi;
        }
        return g;
    }

    /// Spot-check of convexity: finite-difference Hessians at sampled points
    /// must have min eigenvalue >= -tol.
    void check_convexity(const std::vector<VectorXd>& points, double fd_h = 1e-4,
                         double tol = 1e-6) const {
        for (const auto& x : points) {
            const int n = decomp_.dim_total();
            MatrixXd h(n, n);
            for (int a = 0; a < n; ++a)
                for (int b = a; b < n; ++b) {
                    VectorXd epp = x, epm = x, emp = x, emm = x;
                    epp[a] += fd_h; epp[b] += fd_h;
                    epm[a] += fd_h; epm[b] -= fd_h;
                    emp[a] -= fd_h; emp[b] += fd_h;
                    emm[a] -= fd_h; emm[b] -= fd_h;
                    h(a, b) = h(b, a) =
                        (value(epp) - value(epm) - value(emp) + value(emm)) / (4.0 * fd_h * fd_h);
                }
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
            if (es.eigenvalues().minCoeff() < -tol)
                throw invariant_error(name_ + ": convexity check failed, min eig " +
                                      format_double(es.eigenvalues().minCoeff()));
        }
    }

private:
    std::pair<VectorXd, std::vector<double>> reduce(const VectorXd& x) const {
        if (x.size() != decomp_.dim_total())
            throw std::invalid_argument(name_ + ": wrong dimension");
        VectorXd y0 = x.segment(0, decomp_.dim_e0());
        std::vector<double> r(static_cast<std::size_t>(decomp_.num_blocks()));
        for (int i = 0; i < decomp_.num_blocks(); ++i)
            r[static_cast<std::size_t>(i)] = decomp_.block(x, i).norm();
        return {std::move(y0), std::move(r)};
    }

    SubspaceDecomposition decomp_;
    ReducedFn value_;
    ReducedGrad0 grad0_;
    ReducedGradR gradr_;
    std::string name_;
};

/// Per-block alignment report: Proj_i grad V(x) = a_i x_i for symmetric V.
struct AlignmentResult {
    std::vector<double> coefficients;   // a_i per block
    std::vector<double> residuals;      // |Proj_i g - a_i x_i|
};

/// Decomposes a gradient vector along each block direction. Throws if a block
/// projection is zero while its gradient projection is not (broken symmetry),
/// or if a coefficient dips below -1e-10 (broken convexity).
inline AlignmentResult alignment_from_gradient(const SubspaceDecomposition& d, const VectorXd& x,
                                               const VectorXd& g, double tol = 1e-10) {
    AlignmentResult out;
    for (int i = 0; i < d.num_blocks(); ++i) {
        const auto xi = d.block(x, i);
        const VectorXd gi = g.segment(d.block_offset(i), d.block_dim(i));
        const double r = xi.norm();
        if (r < StructuredPotential::origin_radius) {
            if (gi.norm() > tol)
                throw invariant_error("gradient_alignment: nonzero gradient over a zero block");
            out.coefficients.push_back(0.0);
            out.residuals.push_back(gi.norm());
            continue;
        }
        const double a = gi.dot(xi) / (r * r);
        const double res = (gi - a * xi).norm();
        if (res > tol * std::max(1.0, gi.norm()))
            throw invariant_error("gradient_alignment: gradient not radial on block " +
                                  std::to_string(i));
        if (a < -tol)
            throw invariant_error("gradient_alignment: negative coefficient " + format_double(a));
        out.coefficients.push_back(a);
        out.residuals.push_back(res);
    }
    return out;
}

inline AlignmentResult gradient_alignment(const SymmetricConvexPotential& v, const VectorXd& x,
                                          double tol = 1e-10) {
    return alignment_from_gradient(v.decomposition(), x, v.gradient(x), tol);
}

struct SignConditionReport {
    double max_value = -std::numeric_limits<double>::infinity();
    VectorXd worst_point;
    VectorXd worst_direction;
    bool pass = false;
};

/// Max of D^3 U (xi, xi, grad V) over sample points and a direction mesh
/// (coordinate axes, random unit vectors, and the gradient direction itself).
/// The structural hypotheses make the form non-positive.
inline SignConditionReport check_sign_condition(const StructuredPotential& u,
                                                const SymmetricConvexPotential& v,
                                                const std::vector<VectorXd>& points,
                                                int random_directions = 32, double tol = 1e-10,
                                                std::uint64_t seed = 20240901ULL) {
    const int n = u.decomposition().dim_total();
    Rng rng(seed);
    std::vector<VectorXd> dirs;
    for (int a = 0; a < n; ++a) dirs.push_back(VectorXd::Unit(n, a));
    for (int k = 0; k < random_directions; ++k) {
        const auto s = rng.sphere_direction(n);
        dirs.push_back(Eigen::Map<const VectorXd>(s.data(), n));
    }
    SignConditionReport rep;
    for (const auto& x : points) {
        const VectorXd theta = v.gradient(x);
        const double tn = theta.norm();
        std::vector<VectorXd> local = dirs;
        if (tn > 0.0) local.push_back(theta / tn);
        for (const auto& xi : local) {
            const double val = u.third_form(x, xi, theta);
            if (val > rep.max_value) {
                rep.max_value = val;
                rep.worst_point = x;
                rep.worst_direction = xi;
            }
        }
    }
    rep.pass = rep.max_value <= tol;
    return rep;
}

/// Max |F(g x) - F(x)| over group elements and sample points.
inline double invariance_residual(const std::function<double(const VectorXd&)>& f,
                                  const SubspaceDecomposition& d,
                                  const std::vector<GroupElement>& gs,
                                  const std::vector<VectorXd>& points) {
    double worst = 0.0;
    for (const auto& g : gs)
        for (const auto& x : points)
            worst = std::max(worst, std::fabs(f(g.apply(d, x)) - f(x)));
    return worst;
}

}  // namespace heatflow
