#include <catch_amalgamated.hpp>
#include <cmath>

#include "heatflow/gaussian.hpp"
#include "heatflow/rng.hpp"

using namespace heatflow;
using namespace heatflow::gauss;

namespace {

MatrixXd random_spd(Rng& rng, int n, double lo = 0.5, double hi = 2.5) {
    MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<MatrixXd> qr(g);
    MatrixXd q = qr.householderQ();
    VectorXd lam(n);
    for (int i = 0; i < n; ++i) lam[i] = rng.uniform(lo, hi);
    return q * lam.asDiagonal() * q.transpose();
}

}  // namespace

TEST_CASE("curvature matrix: scalar closed form and endpoints", "[gaussian]") {
    GaussianPair p(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
    // a = b = 1: M_t = e^{-2t} / (2 - e^{-2t}); at t = ln2/2 this is 1/3.
    for (double t : {0.0, 0.05, 0.3, 1.0, 2.5}) {
        const double u = std::exp(-2.0 * t);
        REQUIRE(mehler_quadratic(p, t)(0, 0) == Catch::Approx(u / (2.0 - u)).margin(1e-14));
    }
    REQUIRE(mehler_quadratic(p, 0.5 * std::log(2.0))(0, 0) ==
            Catch::Approx(1.0 / 3.0).margin(1e-14));

    Rng rng(101);
    const MatrixXd a = random_spd(rng, 3), b = random_spd(rng, 3);
    GaussianPair q(a, b);
    REQUIRE((mehler_quadratic(q, 0.0) - b).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(frob(mehler_quadratic(q, 12.0)) < 1e-8 * frob(b));
}

TEST_CASE("curvature matrix stays symmetric positive semidefinite", "[gaussian]") {
    Rng rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        GaussianPair p(random_spd(rng, 3), random_spd(rng, 3));
        for (double t : {0.01, 0.1, 0.7, 2.0}) {
            const MatrixXd m = mehler_quadratic(p, t);
            REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
            REQUIRE(es.eigenvalues().minCoeff() > -1e-12);
        }
    }
}

TEST_CASE("matrix flow conserves the conjugation invariant", "[gaussian]") {
    Rng rng(21);
    const MatrixXd a = random_spd(rng, 2), b = random_spd(rng, 2);
    GaussianPair p(a, b);
    const auto flow = integrate_matrix_flow(p, 1e-3);
    REQUIRE(flow.max_invariant_residual < 1e-8);
    REQUIRE(flow.final_m_norm < 1e-8);
    for (const auto& st : flow.states) REQUIRE(st.l.determinant() > 0.0);

    // L_infinity reproduces A + B through the invariant at M = 0.
    const MatrixXd rec = flow.l_infinity.transpose() * a * flow.l_infinity;
    REQUIRE((rec - (a + b)).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("identity pair transports by 1/sqrt(2)", "[gaussian]") {
    GaussianPair p(MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
    const auto flow = integrate_matrix_flow(p, 1e-3);
    const MatrixXd expect = MatrixXd::Identity(2, 2) / std::sqrt(2.0);
    REQUIRE((flow.transport - expect).cwiseAbs().maxCoeff() < 1e-7);
    REQUIRE((brenier_linear(p) - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("commuting pairs recover the optimal map", "[gaussian]") {
    // Diagonal pair: L_infinity = diag(2, sqrt(3/2)).
    GaussianPair p((MatrixXd(2, 2) << 1, 0, 0, 2).finished(),
                   (MatrixXd(2, 2) << 3, 0, 0, 1).finished());
    const auto flow = integrate_matrix_flow(p, 1e-3);
    REQUIRE(flow.l_infinity(0, 0) == Catch::Approx(2.0).margin(1e-7));
    REQUIRE(flow.l_infinity(1, 1) == Catch::Approx(std::sqrt(1.5)).margin(1e-7));
    REQUIRE(std::fabs(flow.l_infinity(0, 1)) < 1e-10);

    const auto diag = commutator_diagnostics(p, {0.1, 0.3, 0.8, 1.5}, flow);
    REQUIRE(diag.max_commutator < 1e-12);
    REQUIRE(diag.max_l_asymmetry < 1e-9);
    REQUIRE(diag.limit_vs_brenier < 1e-7);

    // Same eigenbasis, rotated: still commuting.
    Rng rng(31);
    MatrixXd g(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) g(i, j) = rng.normal();
    const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
    const MatrixXd a = q * (VectorXd(3) << 0.6, 1.1, 2.0).finished().asDiagonal() * q.transpose();
    const MatrixXd b = q * (VectorXd(3) << 1.4, 0.8, 2.2).finished().asDiagonal() * q.transpose();
    GaussianPair pc(0.5 * (a + a.transpose()), 0.5 * (b + b.transpose()));
    const auto fc = integrate_matrix_flow(pc, 1e-3);
    REQUIRE((fc.transport - brenier_linear(pc)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("non-commuting pairs bend away from the optimal map", "[gaussian]") {
    GaussianPair p((MatrixXd(2, 2) << 1.0, 0.0, 0.0, 2.2).finished(),
                   (MatrixXd(2, 2) << 1.6, 0.9, 0.9, 0.8).finished());
    const auto flow = integrate_matrix_flow(p, 1e-3);
    const auto diag = commutator_diagnostics(p, {0.05, 0.2, 0.5, 1.0, 2.0}, flow);
    REQUIRE(diag.max_commutator > 1e-3);
    REQUIRE(diag.max_l_asymmetry > 1e-4);
    REQUIRE(diag.limit_vs_brenier > 1e-6);

    // The flow map is still a contraction even though it is not optimal.
    const auto cert = contraction_certificate(flow.transport);
    REQUIRE(cert.pass);
    REQUIRE(cert.sigma_max <= 1.0 + 1e-8);
}

TEST_CASE("contraction certificates across random pairs", "[gaussian]") {
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 2 + (trial % 2);
        GaussianPair p(random_spd(rng, n), random_spd(rng, n));
        const auto flow = integrate_matrix_flow(p, 1e-3);
        const auto cert = contraction_certificate(flow.transport);
        INFO("trial " << trial << " sigma_max " << cert.sigma_max);
        REQUIRE(cert.pass);
    }
}

TEST_CASE("means are handled by centering", "[gaussian]") {
    const MatrixXd a = 2.0 * MatrixXd::Identity(1, 1), b = MatrixXd::Identity(1, 1);
    const VectorXd mu = VectorXd::Constant(1, 0.5), mv = VectorXd::Constant(1, -1.0);
    GaussianPair p(a, b, mu, mv);
    REQUIRE_FALSE(p.centered());
    // Target mean (A+B)^{-1}(A mu + B mv) = (2*0.5 - 1)/3 = 0.
    REQUIRE(p.target_mean()(0) == Catch::Approx(0.0).margin(1e-14));
    const auto flow = integrate_matrix_flow(p, 1e-3);
    const VectorXd y = apply_affine_transport(p, flow.transport, VectorXd::Constant(1, 0.5));
    // x = mean_u maps to the target mean.
    REQUIRE(y(0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("gaussian pair validation", "[gaussian]") {
    MatrixXd asym(2, 2);
    asym << 1.0, 0.3, -0.3, 1.0;
    REQUIRE_THROWS_AS(GaussianPair(asym, MatrixXd::Identity(2, 2)), std::invalid_argument);
    MatrixXd indef(2, 2);
    indef << 1.0, 2.0, 2.0, 1.0;
    REQUIRE_THROWS_AS(GaussianPair(MatrixXd::Identity(2, 2), indef), std::invalid_argument);
    GaussianPair ok(MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
    REQUIRE_THROWS_AS(integrate_matrix_flow(ok, 0.5), std::invalid_argument);
}
