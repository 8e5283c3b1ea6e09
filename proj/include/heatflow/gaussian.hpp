#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "heatflow/common.hpp"

namespace heatflow {
namespace gauss {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Symmetric square root with eigenvalue clipping at 1e-14.
inline MatrixXd sym_sqrt(const MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    VectorXd lam = es.eigenvalues().cwiseMax(1e-14);
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

inline MatrixXd sym_inv_sqrt(const MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    VectorXd lam = es.eigenvalues().cwiseMax(1e-14);
    return es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

inline double frob(const MatrixXd& m) { return m.norm(); }

inline double spectral_norm(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.transpose() * m);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

/// Reference measure exp(-x'Ax/2) against data exp(-x'Bx/2), optionally with
/// means: U centered at mean_u, the data factor centered at mean_v. Both
/// matrices must be symmetric positive definite.
class GaussianPair {
public:
    GaussianPair(MatrixXd a, MatrixXd b, std::optional<VectorXd> mean_u = std::nullopt,
                 std::optional<VectorXd> mean_v = std::nullopt)
        : a_(std::move(a)), b_(std::move(b)) {
        if (a_.rows() != a_.cols() || b_.rows() != b_.cols() || a_.rows() != b_.rows())
            throw std::invalid_argument("GaussianPair: size mismatch");
        check_spd(a_, "A");
        check_spd(b_, "B");
        mean_u_ = mean_u ? *mean_u : VectorXd::Zero(a_.rows());
        mean_v_ = mean_v ? *mean_v : VectorXd::Zero(a_.rows());
        if (mean_u_.size() != a_.rows() || mean_v_.size() != a_.rows())
            throw std::invalid_argument("GaussianPair: mean size mismatch");
        es_a_.compute(a_);
        b_sqrt_ = sym_sqrt(b_);
    }

    int dim() const { return static_cast<int>(a_.rows()); }
    const MatrixXd& a() const { return a_; }
    const MatrixXd& b() const { return b_; }
    const VectorXd& mean_u() const { return mean_u_; }
    const VectorXd& mean_v() const { return mean_v_; }
    bool centered() const {
        return mean_u_.cwiseAbs().maxCoeff() == 0.0 && mean_v_.cwiseAbs().maxCoeff() == 0.0;
    }

    /// Mean of the target law exp(-U-V)/Z: (A+B)^{-1} (A mean_u + B mean_v).
    VectorXd target_mean() const {
        return (a_ + b_).ldlt().solve(a_ * mean_u_ + b_ * mean_v_);
    }

    MatrixXd exp_minus_at(double t) const {
        const VectorXd lam = es_a_.eigenvalues();
        VectorXd e = (-t * lam.array()).exp().matrix();
        return es_a_.eigenvectors() * e.asDiagonal() * es_a_.eigenvectors().transpose();
    }

    /// Sigma_t = A^{-1}(I - e^{-2At}): the time-t covariance of the
    /// underlying Gaussian semigroup started at a point.
    MatrixXd sigma(double t) const {
        const VectorXd lam = es_a_.eigenvalues();
        VectorXd s(lam.size());
        for (int i = 0; i < lam.size(); ++i)
            s[i] = (1.0 - std::exp(-2.0 * t * lam[i])) / lam[i];
        return es_a_.eigenvectors() * s.asDiagonal() * es_a_.eigenvectors().transpose();
    }

    const MatrixXd& b_sqrt() const { return b_sqrt_; }

private:
    static void check_spd(const MatrixXd& m, const char* tag) {
        const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-12)
            throw std::invalid_argument(std::string("GaussianPair: ") + tag +
                                        " symmetry residual " + format_double(asym));
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument(std::string("GaussianPair: ") + tag +
                                        " not positive definite");
    }

    MatrixXd a_, b_;
    VectorXd mean_u_, mean_v_;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es_a_;
    MatrixXd b_sqrt_;
};

/// Curvature matrix of -log(evolved data factor):
///   M_t = e^{-At} B^{1/2} (I + B^{1/2} Sigma_t B^{1/2})^{-1} B^{1/2} e^{-At},
/// assembled in the manifestly symmetric PSD form. M_0 = B and M_t -> 0.
inline MatrixXd mehler_quadratic(const GaussianPair& p, double t) {
    if (t < 0.0) throw std::domain_error("mehler_quadratic: negative time");
    const MatrixXd e = p.exp_minus_at(t);
    const MatrixXd bs = p.b_sqrt();
    const MatrixXd inner = MatrixXd::Identity(p.dim(), p.dim()) + bs * p.sigma(t) * bs;
    const MatrixXd core = bs * inner.ldlt().solve(bs);
    MatrixXd m = e * core * e;
    m = 0.5 * (m + m.transpose());
    return m;
}

struct MatrixFlowState {
    double t = 0.0;
    MatrixXd m;  // curvature M_t
    MatrixXd l;  // forward flow differential L_t, det > 0
};

struct MatrixFlowResult {
    std::vector<MatrixFlowState> states;  // coarse trail plus the final state
    MatrixXd l_infinity;
    MatrixXd transport;                   // T = L_infinity^{-1}
    double max_invariant_residual = 0.0;
    double final_m_norm = 0.0;
    double t_end = 0.0;
};

/// RK4 on dL/dt = M_t L, L_0 = I, until ||M_t||_F < stop_norm. The conjugation
/// invariant L'(A + M_t)L = A + B is monitored every step and the run aborts
/// if its residual exceeds invariant_tol.
inline MatrixFlowResult integrate_matrix_flow(const GaussianPair& p, double dt = 1e-3,
                                              double stop_norm = 1e-8,
                                              double invariant_tol = 1e-5, double max_t = 200.0,
                                              int store_every = 100) {
    if (!(dt > 0.0) || dt > 1e-2)
        throw std::invalid_argument("integrate_matrix_flow: dt must be in (0, 1e-2]");
    const int n = p.dim();
    const MatrixXd apb = p.a() + p.b();
    MatrixFlowResult out;
    MatrixXd l = MatrixXd::Identity(n, n);
    double t = 0.0;
    MatrixXd m = mehler_quadratic(p, 0.0);
    auto residual = [&](const MatrixXd& lt, const MatrixXd& mt) {
        return frob(lt.transpose() * (p.a() + mt) * lt - apb);
    };
    out.states.push_back({t, m, l});
    long step = 0;
    while (frob(m) >= stop_norm) {
        if (t >= max_t)
            throw numerical_abort("integrate_matrix_flow: horizon exhausted before decay");
        const MatrixXd mh = mehler_quadratic(p, t + 0.5 * dt);
        const MatrixXd m1 = mehler_quadratic(p, t + dt);
        const MatrixXd k1 = m * l;
        const MatrixXd k2 = mh * (l + 0.5 * dt * k1);
        const MatrixXd k3 = mh * (l + 0.5 * dt * k2);
        const MatrixXd k4 = m1 * (l + dt * k3);
        l += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
        m = m1;
        const double res = residual(l, m);
        out.max_invariant_residual = std::max(out.max_invariant_residual, res);
        if (res > invariant_tol)
            throw numerical_abort("integrate_matrix_flow: invariant residual " +
                                  format_double(res) + " at t=" + format_double(t));
        if (++step % store_every == 0) out.states.push_back({t, m, l});
        if (l.determinant() <= 0.0)
            throw numerical_abort("integrate_matrix_flow: flow differential lost orientation");
    }
    out.states.push_back({t, m, l});
    out.l_infinity = l;
    out.transport = l.inverse();
    out.final_m_norm = frob(m);
    out.t_end = t;
    return out;
}

/// Optimal linear transport from N(0, A^{-1}) to N(0, (A+B)^{-1}):
///   C = A^{1/2} (A^{1/2} (A+B) A^{1/2})^{-1/2} A^{1/2}.
/// Validated through C A^{-1} C' = (A+B)^{-1} at 1e-10; failure is fatal.
inline MatrixXd brenier_linear(const GaussianPair& p) {
    const MatrixXd as = sym_sqrt(p.a());
    const MatrixXd mid = sym_inv_sqrt(as * (p.a() + p.b()) * as);
    MatrixXd c = as * mid * as;
    c = 0.5 * (c + c.transpose());
    const MatrixXd push = c * p.a().ldlt().solve(c.transpose());
    const MatrixXd target = (p.a() + p.b()).inverse();
    const double res = (push - target).cwiseAbs().maxCoeff();
    if (res > 1e-10)
        throw invariant_error("brenier_linear: pushforward validation residual " +
                              format_double(res));
    return c;
}

struct CommutatorDiagnostics {
    double max_commutator = 0.0;        // max ||[M_s, M_t]||_F over the mesh
    double max_l_asymmetry = 0.0;       // max ||L_t - L_t'||_F along the flow
    double limit_vs_brenier = 0.0;      // ||L_inf^{-1} - C_opt||_F
};

inline CommutatorDiagnostics commutator_diagnostics(const GaussianPair& p,
                                                    const std::vector<double>& times,
                                                    const MatrixFlowResult& flow) {
    CommutatorDiagnostics d;
    std::vector<MatrixXd> ms;
    ms.reserve(times.size());
    for (double t : times) ms.push_back(mehler_quadratic(p, t));
    for (std::size_t i = 0; i < ms.size(); ++i)
        for (std::size_t j = i + 1; j < ms.size(); ++j)
            d.max_commutator = std::max(d.max_commutator, frob(ms[i] * ms[j] - ms[j] * ms[i]));
    for (const auto& st : flow.states)
        d.max_l_asymmetry = std::max(d.max_l_asymmetry, frob(st.l - st.l.transpose()));
    d.limit_vs_brenier = frob(flow.transport - brenier_linear(p));
    return d;
}

struct ContractionCertificate {
    double sigma_max = 0.0;
    bool pass = false;
};

/// sigma_max(T) <= 1 + 1e-8 certifies the transport is 1-Lipschitz.
inline ContractionCertificate contraction_certificate(const MatrixXd& transport,
                                                      double tol = 1e-8) {
    ContractionCertificate c;
    c.sigma_max = spectral_norm(transport);
    c.pass = c.sigma_max <= 1.0 + tol;
    return c;
}

/// Affine transport for pairs with means: x -> m_target + T (x - mean_u).
inline VectorXd apply_affine_transport(const GaussianPair& p, const MatrixXd& transport,
                                       const VectorXd& x) {
    return p.target_mean() + transport * (x - p.mean_u());
}

}  // namespace gauss
}  // namespace heatflow
