#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "heatflow/common.hpp"
#include "heatflow/interpolate.hpp"
#include "heatflow/numerics.hpp"
#include "heatflow/potentials.hpp"
#include "heatflow/rng.hpp"

namespace heatflow::corr {

/// Reduced coordinates of one sample from a product measure: the Gaussian
/// factor plus one radius per rotation-invariant block.
struct ReducedSample {
    Eigen::VectorXd e0;
    std::vector<double> radii;
};

/// One rotation-invariant factor of the product measure: `dim` ambient
/// coordinates whose radius is distributed as r^{dim-1} e^{-rho(r)} on
/// [0, r_cut].
struct RadialBlock {
    int dim = 1;
    RadialProfile profile;
    double r_cut = 0.0;
};

/// Radius beyond which the block weight r^{d-1} e^{-rho(r)} is below
/// e^{-80} of its scale, so truncating there is invisible to statistics.
inline double default_radius_cut(const RadialProfile& profile, int dim) {
    const double r_max = profile.r_max();
    const int scan = 4096;
    for (int i = 1; i <= scan; ++i) {
        const double r = r_max * static_cast<double>(i) / static_cast<double>(scan);
        const double log_w = (dim - 1) * std::log(std::max(r, 1.0)) - profile.rho(r);
        if (log_w <= -80.0) return r;
    }
    return r_max;
}

/// Draws from the product measure e^{-Q(x0)/...} x prod_i r^{dim_i-1} e^{-rho_i(r)}:
/// a centered Gaussian with inverse covariance Q on the first block and
/// inverse-CDF radius tables (1e5 nodes, monotone cubic) per radial block.
/// Reduced draws are cheap; ambient draws append a uniform direction per block.
class ProductSampler {
public:
    ProductSampler(Eigen::MatrixXd q, std::vector<RadialBlock> blocks,
                   std::size_t table_nodes = 100000)
        : q_(std::move(q)), blocks_(std::move(blocks)) {
        if (q_.rows() != q_.cols()) throw std::invalid_argument("ProductSampler: Q must be square");
        if (q_.rows() > 0) {
            llt_.compute(q_);
            if (llt_.info() != Eigen::Success)
                throw std::invalid_argument("ProductSampler: Q must be positive definite");
            q_inv_ = llt_.solve(Eigen::MatrixXd::Identity(q_.rows(), q_.cols()));
        }
        if (table_nodes < 64) throw std::invalid_argument("ProductSampler: table too small");
        ambient_dim_ = static_cast<int>(q_.rows());
        for (auto& blk : blocks_) {
            if (blk.dim < 1) throw std::invalid_argument("ProductSampler: block dim must be >= 1");
            if (blk.r_cut <= 0.0) blk.r_cut = default_radius_cut(blk.profile, blk.dim);
            ambient_dim_ += blk.dim;
            tables_.push_back(build_table(blk, table_nodes));
        }
    }

    int e0_dim() const { return static_cast<int>(q_.rows()); }
    int ambient_dim() const { return ambient_dim_; }
    const std::vector<RadialBlock>& blocks() const { return blocks_; }
    const Eigen::MatrixXd& q() const { return q_; }

    /// Standard deviation of the j-th Gaussian coordinate, sqrt((Q^{-1})_jj).
    double e0_marginal_sd(int j) const { return std::sqrt(q_inv_(j, j)); }

    ReducedSample sample_reduced(Rng& rng) const {
        ReducedSample s;
        s.e0 = sample_e0(rng);
        s.radii.reserve(blocks_.size());
        for (std::size_t i = 0; i < blocks_.size(); ++i) s.radii.push_back(sample_radius(i, rng));
        return s;
    }

    /// Ambient draw: Gaussian coordinates first, then radius * direction per block.
    Eigen::VectorXd sample_ambient(Rng& rng) const {
        const ReducedSample s = sample_reduced(rng);
        return assemble(s, rng);
    }

    /// Completes a reduced draw with fresh directions.
    Eigen::VectorXd assemble(const ReducedSample& s, Rng& rng) const {
        Eigen::VectorXd x(ambient_dim_);
        x.head(q_.rows()) = s.e0;
        Eigen::Index at = q_.rows();
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const auto dir = rng.sphere_direction(blocks_[i].dim);
            for (int c = 0; c < blocks_[i].dim; ++c) x(at + c) = s.radii[i] * dir[static_cast<std::size_t>(c)];
            at += blocks_[i].dim;
        }
        return x;
    }

    /// Projects an ambient point back to reduced coordinates (block radii).
    ReducedSample reduce(const Eigen::VectorXd& x) const {
        if (x.size() != ambient_dim_) throw std::invalid_argument("ProductSampler: wrong ambient dimension");
        ReducedSample s;
        s.e0 = x.head(q_.rows());
        Eigen::Index at = q_.rows();
        for (const auto& blk : blocks_) {
            s.radii.push_back(x.segment(at, blk.dim).norm());
            at += blk.dim;
        }
        return s;
    }

    double sample_radius(std::size_t block, Rng& rng) const {
        return tables_[block].inverse(rng.uniform01());
    }

    /// Table CDF of the block radius (for cross-checks against quadrature).
    double radius_cdf(std::size_t block, double r) const {
        const auto& tb = tables_[block];
        if (r <= 0.0) return 0.0;
        if (r >= tb.r_hi) return 1.0;
        return std::clamp(tb.forward(r), 0.0, 1.0);
    }

private:
    struct Table {
        MonotoneCubic inverse;  // u in [0,1] -> r
        MonotoneCubic forward;  // r -> u
        double r_hi = 0.0;
    };

    Eigen::VectorXd sample_e0(Rng& rng) const {
        Eigen::VectorXd z(q_.rows());
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
        if (z.size() == 0) return z;
        return llt_.matrixU().solve(z);
    }

    static Table build_table(const RadialBlock& blk, std::size_t nodes) {
        const std::vector<double> r = linspace(0.0, blk.r_cut, nodes);
        std::vector<double> w(nodes);
        for (std::size_t i = 0; i < nodes; ++i)
            w[i] = std::pow(r[i], blk.dim - 1) * std::exp(-blk.profile.rho(r[i]));
        std::vector<double> cdf = cumulative_trapezoid(r, w);
        const double total = cdf.back();
        if (!(total > 0.0) || !std::isfinite(total))
            throw std::invalid_argument("ProductSampler: block weight has no mass");
        for (double& c : cdf) c /= total;
        cdf.back() = 1.0;
        // Drop flat tail segments so the abscissae stay strictly increasing.
        std::vector<double> u_keep, r_keep;
        u_keep.reserve(nodes);
        r_keep.reserve(nodes);
        u_keep.push_back(cdf[0]);
        r_keep.push_back(r[0]);
        for (std::size_t i = 1; i < nodes; ++i) {
            if (cdf[i] > u_keep.back()) {
                u_keep.push_back(cdf[i]);
                r_keep.push_back(r[i]);
            }
        }
        if (u_keep.size() < 8) throw std::invalid_argument("ProductSampler: degenerate radius table");
        Table tb;
        tb.inverse = MonotoneCubic(u_keep, r_keep);
        tb.forward = MonotoneCubic(r_keep, u_keep);
        tb.r_hi = r_keep.back();
        return tb;
    }

    Eigen::MatrixXd q_;
    std::vector<RadialBlock> blocks_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::MatrixXd q_inv_;
    std::vector<Table> tables_;
    int ambient_dim_ = 0;
};

/// Centrally-symmetric test set described in reduced coordinates.  The kind
/// tag is the caller's structural claim and is audited by sampling:
/// convex_symmetric sets must be symmetric under e0 -> -e0; star_shaped sets
/// must additionally survive shrinking any radius and the e0 magnitude.
struct SymmetricSet {
    enum class Kind { convex_symmetric, star_shaped };

    std::string name;
    Kind kind = Kind::convex_symmetric;
    std::function<bool(const ReducedSample&)> member;

    bool contains(const ReducedSample& s) const { return member(s); }

    static SymmetricSet e0_ball(double radius) {
        return {"e0_ball", Kind::star_shaped,
                [radius](const ReducedSample& s) { return s.e0.norm() <= radius; }};
    }

    static SymmetricSet e0_slab(int coord, double half_width) {
        return {"e0_slab", Kind::convex_symmetric,
                [coord, half_width](const ReducedSample& s) { return std::abs(s.e0(coord)) <= half_width; }};
    }

    static SymmetricSet e0_box(Eigen::VectorXd half_widths) {
        return {"e0_box", Kind::convex_symmetric,
                [hw = std::move(half_widths)](const ReducedSample& s) {
                    for (Eigen::Index j = 0; j < hw.size(); ++j)
                        if (std::abs(s.e0(j)) > hw(j)) return false;
                    return true;
                }};
    }

    /// x0' E x0 <= radius^2 with E positive definite; convex claim only,
    /// since shrinking in the Euclidean magnitude need not stay inside.
    static SymmetricSet e0_ellipsoid(Eigen::MatrixXd e, double radius) {
        return {"e0_ellipsoid", Kind::convex_symmetric,
                [e = std::move(e), r2 = radius * radius](const ReducedSample& s) {
                    return s.e0.dot(e * s.e0) <= r2;
                }};
    }

    static SymmetricSet block_ball(std::size_t block, double radius) {
        return {"block_ball", Kind::star_shaped,
                [block, radius](const ReducedSample& s) { return s.radii.at(block) <= radius; }};
    }

    static SymmetricSet radius_box(std::vector<double> bounds) {
        return {"radius_box", Kind::star_shaped,
                [b = std::move(bounds)](const ReducedSample& s) {
                    for (std::size_t i = 0; i < b.size(); ++i)
                        if (s.radii.at(i) > b[i]) return false;
                    return true;
                }};
    }

    /// |e0|^2 + sum radii^2 <= radius^2.
    static SymmetricSet ambient_ball(double radius) {
        return {"ambient_ball", Kind::star_shaped,
                [r2 = radius * radius](const ReducedSample& s) {
                    double q = s.e0.squaredNorm();
                    for (double r : s.radii) q += r * r;
                    return q <= r2;
                }};
    }

    static SymmetricSet intersect(const SymmetricSet& a, const SymmetricSet& b, std::string name = {}) {
        SymmetricSet out;
        out.name = name.empty() ? a.name + "&" + b.name : std::move(name);
        out.kind = (a.kind == Kind::star_shaped && b.kind == Kind::star_shaped)
                       ? Kind::star_shaped
                       : Kind::convex_symmetric;
        out.member = [fa = a.member, fb = b.member](const ReducedSample& s) { return fa(s) && fb(s); };
        return out;
    }

    static SymmetricSet unite(const SymmetricSet& a, const SymmetricSet& b, std::string name = {}) {
        SymmetricSet out;
        out.name = name.empty() ? a.name + "|" + b.name : std::move(name);
        out.kind = Kind::star_shaped;
        out.member = [fa = a.member, fb = b.member](const ReducedSample& s) { return fa(s) || fb(s); };
        return out;
    }
};

/// Sampling audit outcome: `violations` counts witnesses of a broken claim.
struct AuditReport {
    std::size_t tested = 0;
    std::size_t violations = 0;
    bool pass() const { return tested > 0 && violations == 0; }
};

/// Checks membership is invariant under e0 -> -e0 (radii are already
/// reflection-invariant magnitudes).
inline AuditReport central_symmetry_audit(const SymmetricSet& set, const ProductSampler& sampler,
                                          std::size_t n, Rng& rng) {
    AuditReport rep;
    for (std::size_t i = 0; i < n; ++i) {
        ReducedSample s = sampler.sample_reduced(rng);
        const bool inside = set.contains(s);
        s.e0 = -s.e0;
        if (inside != set.contains(s)) ++rep.violations;
        ++rep.tested;
    }
    return rep;
}

/// For star-shaped sets: every sampled member must stay inside after
/// shrinking each radius by an independent factor in [0,1], scaling the e0
/// magnitude by a factor in [0,1], and flipping e0 coordinate signs.
/// `tested` counts sampled members, not raw draws.
inline AuditReport shrinking_audit(const SymmetricSet& set, const ProductSampler& sampler,
                                   std::size_t n, Rng& rng) {
    if (set.kind != SymmetricSet::Kind::star_shaped)
        throw std::invalid_argument("shrinking_audit: set is not claimed star-shaped");
    AuditReport rep;
    for (std::size_t i = 0; i < n; ++i) {
        ReducedSample s = sampler.sample_reduced(rng);
        if (!set.contains(s)) continue;
        ReducedSample t = s;
        const double s0 = rng.uniform01();
        for (Eigen::Index j = 0; j < t.e0.size(); ++j)
            t.e0(j) *= s0 * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
        for (double& r : t.radii) r *= rng.uniform01();
        if (!set.contains(t)) ++rep.violations;
        ++rep.tested;
    }
    return rep;
}

namespace detail {

/// One-sample Kolmogorov-Smirnov statistic; `cdf_sorted[i]` is the model CDF
/// at the i-th order statistic.
inline double ks_statistic_sorted(const std::vector<double>& cdf_sorted) {
    const double n = static_cast<double>(cdf_sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < cdf_sorted.size(); ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max(d, std::max(cdf_sorted[i] - lo, hi - cdf_sorted[i]));
    }
    return d;
}

inline double normal_cdf(double x, double sd) {
    return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0)));
}

}  // namespace detail

/// Marginal distribution audit: per-block radius KS against an independently
/// integrated CDF, per-coordinate Gaussian KS against the normal CDF.
struct KsAuditReport {
    std::vector<double> block_ks;
    std::vector<double> e0_ks;
    double threshold = 0.0;
    bool pass() const {
        for (double d : block_ks)
            if (d > threshold) return false;
        for (double d : e0_ks)
            if (d > threshold) return false;
        return true;
    }
};

inline KsAuditReport sampler_ks_audit(const ProductSampler& sampler, std::size_t n, Rng& rng) {
    if (n < 100) throw std::invalid_argument("sampler_ks_audit: need at least 100 samples");
    KsAuditReport rep;
    rep.threshold = 2.0 / std::sqrt(static_cast<double>(n));

    std::vector<std::vector<double>> radii(sampler.blocks().size());
    std::vector<std::vector<double>> coords(static_cast<std::size_t>(sampler.e0_dim()));
    for (auto& v : radii) v.reserve(n);
    for (auto& v : coords) v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ReducedSample s = sampler.sample_reduced(rng);
        for (std::size_t b = 0; b < radii.size(); ++b) radii[b].push_back(s.radii[b]);
        for (std::size_t j = 0; j < coords.size(); ++j) coords[j].push_back(s.e0(static_cast<Eigen::Index>(j)));
    }

    for (std::size_t b = 0; b < radii.size(); ++b) {
        auto& r = radii[b];
        std::sort(r.begin(), r.end());
        const auto& blk = sampler.blocks()[b];
        const auto w = [&blk](double x) {
            return std::pow(x, blk.dim - 1) * std::exp(-blk.profile.rho(x));
        };
        // Accumulate the quadrature CDF over the gaps between order statistics.
        const double total = adaptive_simpson(w, 0.0, blk.r_cut, 1e-12);
        std::vector<double> cdf(r.size());
        double acc = 0.0, prev = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            acc += adaptive_simpson(w, prev, r[i], 1e-13);
            prev = r[i];
            cdf[i] = std::clamp(acc / total, 0.0, 1.0);
        }
        rep.block_ks.push_back(detail::ks_statistic_sorted(cdf));
    }

    for (std::size_t j = 0; j < coords.size(); ++j) {
        auto& c = coords[j];
        std::sort(c.begin(), c.end());
        const double sd = sampler.e0_marginal_sd(static_cast<int>(j));
        std::vector<double> cdf(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) cdf[i] = detail::normal_cdf(c[i], sd);
        rep.e0_ks.push_back(detail::ks_statistic_sorted(cdf));
    }
    return rep;
}

namespace detail {

/// Delta-method standard error of g = p_ab - p_a p_b from one multinomial
/// sample of size n: gradient (1, -p_b, -p_a) against the covariance of
/// (1_ab, 1_a, 1_b).
inline double correlation_gap_stderr(double pa, double pb, double pab, std::size_t n) {
    const double g1 = 1.0, g2 = -pb, g3 = -pa;
    const double s11 = pab * (1.0 - pab);
    const double s12 = pab * (1.0 - pa);
    const double s13 = pab * (1.0 - pb);
    const double s22 = pa * (1.0 - pa);
    const double s23 = pab - pa * pb;
    const double s33 = pb * (1.0 - pb);
    const double var = g1 * g1 * s11 + g2 * g2 * s22 + g3 * g3 * s33 +
                       2.0 * (g1 * g2 * s12 + g1 * g3 * s13 + g2 * g3 * s23);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
}

}  // namespace detail

/// Monte-Carlo estimate of mu(A cap B) - mu(A) mu(B) with a delta-method
/// standard error.  `degenerate` flags empirical measure 0 or 1, where the
/// inequality is vacuous.
struct CorrelationEstimate {
    double p_a = 0.0;
    double p_b = 0.0;
    double p_ab = 0.0;
    double gap = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
    bool degenerate = false;
    bool pass(double k = 2.0) const { return !degenerate && gap >= -k * stderr_; }
};

inline CorrelationEstimate estimate_correlation(const SymmetricSet& a, const SymmetricSet& b,
                                                const ProductSampler& sampler, std::size_t n,
                                                Rng& rng) {
    if (n < 10000) throw std::invalid_argument("estimate_correlation: need N >= 1e4");
    std::size_t ca = 0, cb = 0, cab = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const ReducedSample s = sampler.sample_reduced(rng);
        const bool ia = a.contains(s);
        const bool ib = b.contains(s);
        ca += ia;
        cb += ib;
        cab += (ia && ib);
    }
    CorrelationEstimate est;
    est.n = n;
    est.p_a = static_cast<double>(ca) / static_cast<double>(n);
    est.p_b = static_cast<double>(cb) / static_cast<double>(n);
    est.p_ab = static_cast<double>(cab) / static_cast<double>(n);
    est.gap = est.p_ab - est.p_a * est.p_b;
    est.stderr_ = detail::correlation_gap_stderr(est.p_a, est.p_b, est.p_ab, n);
    est.degenerate = (ca == 0 || ca == n || cb == 0 || cb == n);
    return est;
}

/// Scenario wrapper: a statistically failing run is retried once at 4N on a
/// fresh stream before the verdict is final, separating noise from genuine
/// violations.
struct ScenarioResult {
    std::string name;
    CorrelationEstimate estimate;
    bool retried = false;
    bool pass = false;
};

inline ScenarioResult run_correlation_scenario(std::string name, const SymmetricSet& a,
                                               const SymmetricSet& b, const ProductSampler& sampler,
                                               std::size_t n, std::uint64_t seed) {
    ScenarioResult res;
    res.name = std::move(name);
    Rng rng(seed, 0);
    res.estimate = estimate_correlation(a, b, sampler, n, rng);
    res.pass = res.estimate.pass();
    if (!res.pass) {
        Rng retry(seed, 1);
        res.estimate = estimate_correlation(a, b, sampler, 4 * n, retry);
        res.retried = true;
        res.pass = res.estimate.pass();
    }
    return res;
}

/// Compares expectations of a nonnegative functional under the source measure
/// and under its image by a transport map.  Samples where the map is
/// undefined are dropped from both sides and counted.
struct TransferReport {
    double nu_mean = 0.0;
    double mu_mean = 0.0;
    double nu_stderr = 0.0;
    double mu_stderr = 0.0;
    std::size_t used = 0;
    std::size_t dropped = 0;
    double combined_stderr() const { return std::hypot(nu_stderr, mu_stderr); }
    bool pass(double k = 2.0) const { return nu_mean <= mu_mean + k * combined_stderr(); }
};

inline TransferReport transfer_expectation(
    const std::function<double(const Eigen::VectorXd&)>& gamma, const ProductSampler& sampler,
    const std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)>& map, std::size_t n,
    Rng& rng) {
    if (n < 100) throw std::invalid_argument("transfer_expectation: need at least 100 samples");
    double sum_mu = 0.0, sq_mu = 0.0, sum_nu = 0.0, sq_nu = 0.0;
    TransferReport rep;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd x = sampler.sample_ambient(rng);
        const auto y = map(x);
        if (!y) {
            ++rep.dropped;
            continue;
        }
        const double gm = gamma(x);
        const double gn = gamma(*y);
        sum_mu += gm;
        sq_mu += gm * gm;
        sum_nu += gn;
        sq_nu += gn * gn;
        ++rep.used;
    }
    if (rep.used < 2) throw invariant_error("transfer_expectation: all samples dropped");
    const double m = static_cast<double>(rep.used);
    rep.mu_mean = sum_mu / m;
    rep.nu_mean = sum_nu / m;
    rep.mu_stderr = std::sqrt(std::max(sq_mu / m - rep.mu_mean * rep.mu_mean, 0.0) / m);
    rep.nu_stderr = std::sqrt(std::max(sq_nu / m - rep.nu_mean * rep.nu_mean, 0.0) / m);
    return rep;
}

/// Audits that a map sends a symmetric set into itself, and that it contracts
/// every block projection: |Proj_i T(x)| <= |Proj_i x| + tol for the Gaussian
/// block and each radial block.
struct InvarianceReport {
    std::size_t in_set = 0;
    std::size_t stayed = 0;
    std::size_t escaped = 0;
    std::size_t left_set = 0;
    std::size_t projection_violations = 0;
    double fraction = 0.0;
    bool pass = false;
};

inline InvarianceReport set_invariance_audit(
    const SymmetricSet& set, const ProductSampler& sampler,
    const std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)>& map, std::size_t n,
    Rng& rng, double tol = 1e-9) {
    InvarianceReport rep;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd x = sampler.sample_ambient(rng);
        const ReducedSample sx = sampler.reduce(x);
        if (!set.contains(sx)) continue;
        ++rep.in_set;
        const auto y = map(x);
        if (!y) {
            ++rep.escaped;
            continue;
        }
        const ReducedSample sy = sampler.reduce(*y);
        if (set.contains(sy))
            ++rep.stayed;
        else
            ++rep.left_set;
        if (sy.e0.norm() > sx.e0.norm() + tol) ++rep.projection_violations;
        for (std::size_t b = 0; b < sx.radii.size(); ++b)
            if (sy.radii[b] > sx.radii[b] + tol) ++rep.projection_violations;
    }
    const std::size_t usable = rep.in_set - rep.escaped;
    rep.fraction = usable == 0 ? 0.0 : static_cast<double>(rep.stayed) / static_cast<double>(usable);
    rep.pass = rep.in_set > 0 && rep.left_set == 0 && rep.projection_violations == 0;
    return rep;
}

/// Function-level correlation via the layer-cake reduction: thresholds at
/// empirical quantiles (default 32 levels) turn E[fg] >= E[f]E[g] into
/// superlevel-set correlation gaps, checked jointly through one histogram
/// of level indices.  Also reports the direct covariance estimate with an
/// influence-function standard error.
struct LayerCakeReport {
    double direct_gap = 0.0;
    double direct_stderr = 0.0;
    double min_pair_z = 0.0;
    std::size_t levels_f = 0;
    std::size_t levels_g = 0;
    std::size_t pairs_tested = 0;
    bool pass(double k = 2.0) const {
        return direct_gap >= -k * direct_stderr && min_pair_z >= -k;
    }
};

inline LayerCakeReport layer_cake_correlation(const std::function<double(const ReducedSample&)>& f,
                                              const std::function<double(const ReducedSample&)>& g,
                                              const ProductSampler& sampler, std::size_t n, Rng& rng,
                                              std::size_t levels = 32) {
    if (n < 10000) throw std::invalid_argument("layer_cake_correlation: need N >= 1e4");
    if (levels < 2) throw std::invalid_argument("layer_cake_correlation: need >= 2 levels");
    std::vector<double> fv(n), gv(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ReducedSample s = sampler.sample_reduced(rng);
        fv[i] = f(s);
        gv[i] = g(s);
    }

    const auto quantile_thresholds = [levels](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        std::vector<double> thr;
        for (std::size_t j = 1; j <= levels; ++j) {
            const std::size_t at = j * v.size() / (levels + 1);
            const double t = v[std::min(at, v.size() - 1)];
            if (thr.empty() || t > thr.back()) thr.push_back(t);
        }
        return thr;
    };
    const std::vector<double> thr_f = quantile_thresholds(fv);
    const std::vector<double> thr_g = quantile_thresholds(gv);
    const std::size_t lf = thr_f.size(), lg = thr_g.size();

    // level(v) = number of thresholds strictly below v, so {level >= j+1} is
    // the superlevel set {v > thr[j]}.
    const auto level_of = [](const std::vector<double>& thr, double v) {
        return static_cast<std::size_t>(std::lower_bound(thr.begin(), thr.end(), v) - thr.begin());
    };
    std::vector<std::vector<std::size_t>> hist(lf + 1, std::vector<std::size_t>(lg + 1, 0));
    for (std::size_t i = 0; i < n; ++i) ++hist[level_of(thr_f, fv[i])][level_of(thr_g, gv[i])];

    // suffix[a][b] = number of samples with f-level >= a and g-level >= b.
    std::vector<std::vector<std::size_t>> suffix(lf + 2, std::vector<std::size_t>(lg + 2, 0));
    for (std::size_t a = lf + 1; a-- > 0;)
        for (std::size_t b = lg + 1; b-- > 0;)
            suffix[a][b] = hist[a][b] + suffix[a + 1][b] + suffix[a][b + 1] - suffix[a + 1][b + 1];

    LayerCakeReport rep;
    rep.levels_f = lf;
    rep.levels_g = lg;
    rep.min_pair_z = std::numeric_limits<double>::infinity();
    const double dn = static_cast<double>(n);
    for (std::size_t j = 0; j < lf; ++j) {
        for (std::size_t l = 0; l < lg; ++l) {
            const double pa = static_cast<double>(suffix[j + 1][0]) / dn;
            const double pb = static_cast<double>(suffix[0][l + 1]) / dn;
            if (pa <= 0.0 || pa >= 1.0 || pb <= 0.0 || pb >= 1.0) continue;
            const double pab = static_cast<double>(suffix[j + 1][l + 1]) / dn;
            const double gap = pab - pa * pb;
            const double se = detail::correlation_gap_stderr(pa, pb, pab, n);
            if (se > 0.0) rep.min_pair_z = std::min(rep.min_pair_z, gap / se);
            ++rep.pairs_tested;
        }
    }
    if (rep.pairs_tested == 0) rep.min_pair_z = 0.0;

    double mf = 0.0, mg = 0.0, mfg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mf += fv[i];
        mg += gv[i];
        mfg += fv[i] * gv[i];
    }
    mf /= dn;
    mg /= dn;
    mfg /= dn;
    rep.direct_gap = mfg - mf * mg;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += sq((fv[i] - mf) * (gv[i] - mg) - rep.direct_gap);
    rep.direct_stderr = std::sqrt(var / dn) / std::sqrt(dn);
    return rep;
}

/// Deterministic check value for planar Gaussian set probabilities: midpoint
/// tensor-grid quadrature of e^{-x'Qx/2} over [-half_width, half_width]^2,
/// normalized by the same rule so the constant cancels.
struct QuadratureGap {
    double p_a = 0.0;
    double p_b = 0.0;
    double p_ab = 0.0;
    double gap = 0.0;
};

inline QuadratureGap gaussian_quadrature_gap_2d(const SymmetricSet& a, const SymmetricSet& b,
                                                const Eigen::Matrix2d& q, double half_width = 8.0,
                                                std::size_t nodes = 3200) {
    if (nodes < 64) throw std::invalid_argument("gaussian_quadrature_gap_2d: too few nodes");
    const double h = 2.0 * half_width / static_cast<double>(nodes);
    ReducedSample s;
    s.e0.resize(2);
    double mass = 0.0, ma = 0.0, mb = 0.0, mab = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
        const double x = -half_width + (static_cast<double>(i) + 0.5) * h;
        for (std::size_t j = 0; j < nodes; ++j) {
            const double y = -half_width + (static_cast<double>(j) + 0.5) * h;
            const double w = std::exp(-0.5 * (q(0, 0) * x * x + 2.0 * q(0, 1) * x * y + q(1, 1) * y * y));
            mass += w;
            s.e0(0) = x;
            s.e0(1) = y;
            const bool ia = a.contains(s);
            const bool ib = b.contains(s);
            if (ia) ma += w;
            if (ib) mb += w;
            if (ia && ib) mab += w;
        }
    }
    QuadratureGap out;
    out.p_a = ma / mass;
    out.p_b = mb / mass;
    out.p_ab = mab / mass;
    out.gap = out.p_ab - out.p_a * out.p_b;
    return out;
}

}  // namespace heatflow::corr
