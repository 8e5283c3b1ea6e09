#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "heatflow/brenier.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/gaussian.hpp"
#include "heatflow/numerics.hpp"
#include "heatflow/rng.hpp"
#include "heatflow/semigroup.hpp"

using namespace heatflow;
using namespace heatflow::pde;
using Catch::Approx;

namespace {

/// Gaussian snapshot e^{-m x^2 / 2} on a 1D grid at time t.
GridField gaussian_field_1d(const Grid& g, double m, double t) {
    std::vector<double> v(g.nx);
    for (std::size_t i = 0; i < g.nx; ++i) v[i] = std::exp(-0.5 * m * sq(g.x(i)));
    return GridField(g, Boundary::reflecting, std::move(v), t);
}

/// Gaussian snapshot e^{-(m1 x^2 + m2 y^2)/2} on a 2D grid at time t.
GridField gaussian_field_2d(const Grid& g, double m1, double m2, double t) {
    std::vector<double> v(g.size());
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i)
            v[g.idx(i, j)] = std::exp(-0.5 * (m1 * sq(g.x(i)) + m2 * sq(g.y(j))));
    return GridField(g, Boundary::reflecting, std::move(v), t);
}

/// Curvature of the evolved Gaussian for the scalar pair (a, b):
/// m(t) = e^{-2at} b / (1 + b (1 - e^{-2at}) / a).
double gaussian_m(double a, double b, double t) {
    const double e = std::exp(-2.0 * a * t);
    return e * b / (1.0 + b * (1.0 - e) / a);
}

std::vector<double> constant_times(double dt, double horizon) {
    std::vector<double> ts{0.0};
    while (ts.back() < horizon - 1e-12) ts.push_back(ts.back() + dt);
    return ts;
}

}  // namespace

TEST_CASE("constant field has zero velocity and identity flow", "[flow]") {
    const Grid g = Grid::line(-4.0, 4.0, 33);
    std::vector<GridField> snaps;
    snaps.emplace_back(g, Boundary::reflecting, std::vector<double>(g.nx, 1.0), 0.0);
    snaps.emplace_back(g, Boundary::reflecting, std::vector<double>(g.nx, 1.0), 0.1);
    auto field = build_advection(-3.5, 3.5, snaps);

    CHECK(field.velocity(0.05, 1.3) == Approx(0.0).margin(1e-15));
    CHECK(field.curvature(0.05, -2.0) == Approx(0.0).margin(1e-15));
    CHECK(field.w_sup(0) == Approx(0.0).margin(1e-15));

    const std::vector<double> seeds{-1.0, 0.5, 2.0};
    auto fwd = integrate_forward(field, seeds, 0.1);
    REQUIRE(fwd.tracks.size() == 3);
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        CHECK_FALSE(fwd.tracks[k].escaped);
        CHECK(fwd.tracks[k].x == Approx(seeds[k]).margin(1e-14));
        CHECK(fwd.tracks[k].j == Approx(1.0).margin(1e-14));
    }

    auto lim = limit_map(field, seeds, 1e-3);
    CHECK(lim.complete);
    CHECK(lim.t_star == Approx(0.0).margin(1e-15));
    CHECK(lim.residual_w_sup == Approx(0.0).margin(1e-15));
    const auto vals = lim.values();
    for (std::size_t k = 0; k < seeds.size(); ++k)
        CHECK(vals[k] == Approx(seeds[k]).margin(1e-14));

    CHECK(expansion_certificate(fwd).worst == Approx(0.0).margin(1e-14));
    CHECK(contraction_certificate(lim.ensemble).worst == Approx(0.0).margin(1e-14));
}

TEST_CASE("advection field construction rejects bad input", "[flow]") {
    const Grid g = Grid::line(-4.0, 4.0, 33);
    GridField one(g, Boundary::reflecting, std::vector<double>(g.nx, 1.0), 0.0);

    CHECK_THROWS_AS(build_advection(-3.5, 3.5, {one}), std::invalid_argument);
    CHECK_THROWS_AS(AdvectionField1D(2.0, -2.0), std::invalid_argument);

    AdvectionField1D f(-3.5, 3.5);
    f.append(one);
    GridField stale = one;  // same time again
    CHECK_THROWS_AS(f.append(stale), std::invalid_argument);

    const Grid other = Grid::line(-4.0, 4.0, 65);
    GridField mismatched(other, Boundary::reflecting, std::vector<double>(other.nx, 1.0), 0.5);
    CHECK_THROWS_AS(f.append(mismatched), std::invalid_argument);

    GridField zero(g, Boundary::reflecting, std::vector<double>(g.nx, 0.0), 0.5);
    CHECK_THROWS_AS(f.append(zero), invariant_error);

    GridField later = one;
    later.t = 0.5;
    f.append(later);
    CHECK_THROWS_AS(f.velocity(-0.5, 0.0), std::domain_error);
    CHECK_THROWS_AS(f.velocity(3.0, 0.0), std::domain_error);

    // Window narrower than 8 grid cells is rejected up front.
    AdvectionField1D tiny(-0.4, 0.4);
    CHECK_THROWS_AS(tiny.append(one), std::invalid_argument);
}

TEST_CASE("semigroup-built advection matches the closed-form Gaussian drift", "[flow]") {
    const Grid g = Grid::line(-8.0, 8.0, 1601);
    auto potential = [](double x) { return 0.5 * x * x; };
    Stepper1D st(g, potential, Boundary::reflecting);
    GridField f = gaussian_field_1d(g, 1.0, 0.0);

    AdvectionField1D field(-4.0, 4.0);
    EvolveOptions opt;
    opt.dt = 1e-3;
    opt.horizon = 0.5;
    opt.snapshot_times = constant_times(0.025, 0.5);
    opt.snapshot_times.erase(opt.snapshot_times.begin());  // t = 0 is implicit
    evolve(st, f, opt, [&](const GridField& s, const SnapshotDiagnostics& d) {
        field.append(s, d.w_sup_core);
    });
    REQUIRE(field.size() == 21);

    // W(t, x) = m(t) x for the scalar pair a = b = 1.
    for (double t : {0.0, 0.1, 0.26, 0.4}) {
        for (double x : {-2.0, 0.7, 1.0, 3.0}) {
            const double want = gaussian_m(1.0, 1.0, t) * x;
            CHECK(field.velocity(t, x) == Approx(want).margin(2e-3));
        }
        // Linearity across the window.
        const double v1 = field.velocity(t, 1.1);
        const double v2 = field.velocity(t, 2.2);
        CHECK(v2 == Approx(2.0 * v1).margin(4e-3));
        // Curvature is the x-independent coefficient itself.
        CHECK(field.curvature(t, 0.4) == Approx(gaussian_m(1.0, 1.0, t)).margin(2e-3));
    }
}

TEST_CASE("forward flow reproduces the scalar matrix-flow factor", "[flow]") {
    // Analytic snapshots are exact in space (quadratic log-density), so the
    // only error sources are linear time interpolation and RK4.
    const Grid g = Grid::line(-6.0, 6.0, 49);
    AdvectionField1D field(-5.5, 5.5);
    for (double t : constant_times(0.0025, 2.05))
        field.append(gaussian_field_1d(g, gaussian_m(1.0, 1.0, t), t));

    Eigen::MatrixXd a(1, 1), b(1, 1);
    a << 1.0;
    b << 1.0;
    const gauss::GaussianPair pair(a, b);
    const auto mf = gauss::integrate_matrix_flow(pair);

    const std::vector<double> seeds{0.5, 1.0, 1.7};
    for (double t_end : {0.5, 1.0, 2.0}) {
        const gauss::MatrixFlowState* state = nullptr;
        for (const auto& s : mf.states)
            if (std::fabs(s.t - t_end) < 1e-9) state = &s;
        REQUIRE(state != nullptr);
        auto ens = integrate_forward(field, seeds, t_end);
        REQUIRE(ens.escaped_count() == 0);
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            CHECK(ens.tracks[k].x == Approx(state->l(0, 0) * seeds[k]).margin(1e-4));
            CHECK(ens.tracks[k].j == Approx(state->l(0, 0)).margin(1e-4));
        }
    }
}

TEST_CASE("planar limit map recovers the optimal linear transport", "[flow][slow]") {
    // Commuting pair A = diag(1, 2), B = diag(3, 1): the optimal map from the
    // heat-flow limit is diag(1/2, sqrt(2/3)).
    const Grid g = Grid::box(-5.0, 5.0, 41, -5.0, 5.0, 41);
    AdvectionField2D field(-4.6, 4.6, -4.6, 4.6);
    std::vector<double> times{0.0};
    for (double t : geometric_snapshot_schedule(0.0025, 1.15, 0.02, 8.0)) times.push_back(t);
    for (double t : times)
        field.append(
            gaussian_field_2d(g, gaussian_m(1.0, 3.0, t), gaussian_m(2.0, 1.0, t), t));

    REQUIRE(field.first_index_below(1e-5).has_value());

    std::vector<Eigen::Vector2d> seeds;
    for (double sx : {-2.0, 0.0, 2.0})
        for (double sy : {-2.0, 0.0, 2.0}) seeds.emplace_back(sx, sy);
    seeds.emplace_back(1.0, -1.5);

    auto lim = limit_map(field, seeds, 1e-5);
    CHECK(lim.complete);
    CHECK(lim.residual_w_sup < 1e-5);
    CHECK(lim.t_star > 5.0);
    CHECK(lim.ensemble.escaped_count() == 0);

    const double cx = 0.5, cy = std::sqrt(2.0 / 3.0);
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        const auto& tr = lim.ensemble.tracks[k];
        CHECK(tr.x(0) == Approx(cx * seeds[k](0)).margin(1e-3));
        CHECK(tr.x(1) == Approx(cy * seeds[k](1)).margin(1e-3));
    }

    auto contr = contraction_certificate(lim.ensemble);
    CHECK(contr.used == seeds.size());
    CHECK(contr.worst < 0.0);            // strictly contracting pair
    CHECK(contr.worst > cx * cx - 1.0 - 1e-2);
    CHECK(jacobian_asymmetry(lim.ensemble) < 1e-6);

    std::vector<Eigen::Vector2d> fwd_seeds{{1.0, 1.0}, {-1.0, 0.5}, {0.3, -1.2}};
    auto fwd = integrate_forward(field, fwd_seeds, lim.t_star);
    auto expa = expansion_certificate(fwd);
    CHECK(expa.used == fwd_seeds.size());
    CHECK(expa.worst > 0.3);  // min eigenvalue of J^T J - I approaches 2/3 - ... > 0
}

TEST_CASE("flow certificates hold along a non-Gaussian relaxation", "[flow][slow]") {
    // Source mu ~ e^{-logcosh}, initial multiplier e^{-x^2/2}; the backward
    // limit map must match the quantile transport between the measures.
    const Grid g = Grid::line(-16.0, 16.0, 3201);
    auto potential = [](double x) { return std::log(std::cosh(x)); };
    Stepper1D st(g, potential, Boundary::reflecting);
    std::vector<double> v0(g.nx);
    for (std::size_t i = 0; i < g.nx; ++i) v0[i] = std::exp(-0.5 * sq(g.x(i)));
    GridField f(g, Boundary::reflecting, std::move(v0), 0.0);

    AdvectionField1D field(-9.5, 9.5);
    EvolveOptions opt;
    opt.dt = 1e-3;
    opt.horizon = 50.0;
    opt.snapshot_times = geometric_snapshot_schedule(0.01, 1.2, 0.05, 50.0);
    opt.stop_w_sup = 1e-4;
    opt.instability_tol = 1e-6;
    auto res = evolve(st, f, opt, [&](const GridField& s, const SnapshotDiagnostics& d) {
        field.append(s, d.w_sup_core);
    });
    REQUIRE(res.stopped_early);
    REQUIRE(res.stop_reason == "w_sup");
    CHECK(res.mass_rel_drift < 1e-10);

    const auto seeds = linspace(-2.5, 2.5, 11);

    const double t_end = field.t_back();
    CHECK(round_trip_error(field, seeds, t_end) < 1e-6);

    auto fwd = integrate_forward(field, seeds, t_end);
    REQUIRE(fwd.escaped_count() == 0);
    CHECK(expansion_certificate(fwd).worst > -1e-6);

    auto lim = limit_map(field, seeds, 1e-4);
    CHECK(lim.complete);
    CHECK(lim.t_star == Approx(t_end));
    REQUIRE(lim.ensemble.escaped_count() == 0);
    CHECK(pairwise_lipschitz(lim.ensemble) <= 1.0 + 5e-3);
    CHECK(contraction_certificate(lim.ensemble).worst <= 5e-3);

    Density1D src([](double x) { return -std::log(std::cosh(x)); }, -20.0, 20.0);
    Density1D tgt([](double x) { return -std::log(std::cosh(x)) - 0.5 * x * x; }, -20.0, 20.0);
    const auto want = quantile_map(src, tgt, seeds).values();
    const auto got = lim.values();
    double worst = 0.0;
    for (std::size_t k = 0; k < seeds.size(); ++k)
        worst = std::max(worst, std::fabs(got[k] - want[k]));
    CHECK(worst < 5e-3);

    const double push = pushforward_residual(seeds, got, src, tgt);
    CHECK(push < 5e-3);
}

TEST_CASE("radial flow matches the radial quantile transport", "[flow][slow]") {
    // Ambient dimension 3, profile rho = r^2/2, multiplier e^{-logcosh(r)}.
    const int n = 3;
    const Grid g = Grid::radial_line(12.0, 2400, n);
    auto rho = [](double r) { return 0.5 * r * r; };
    auto u_eff = radial_effective_potential(rho, n);
    Stepper1D st(g, u_eff, Boundary::reflecting);
    std::vector<double> v0(g.nx);
    for (std::size_t i = 0; i < g.nx; ++i) v0[i] = 1.0 / std::cosh(g.x(i));
    GridField f(g, Boundary::reflecting, std::move(v0), 0.0);

    AdvectionField1D field(0.015, 8.0);
    EvolveOptions opt;
    opt.dt = 1e-3;
    opt.horizon = 15.0;
    opt.snapshot_times = geometric_snapshot_schedule(0.01, 1.2, 0.05, 15.0);
    opt.stop_w_sup = 1e-4;
    opt.instability_tol = 1e-6;
    auto res = evolve(st, f, opt, [&](const GridField& s, const SnapshotDiagnostics& d) {
        field.append(s, d.w_sup_core);
    });
    REQUIRE(res.stopped_early);

    const std::vector<double> seeds{0.25, 0.6, 1.0, 1.5, 2.0, 2.5};
    auto lim = limit_map(field, seeds, 1e-4);
    CHECK(lim.complete);
    REQUIRE(lim.ensemble.escaped_count() == 0);

    Density1D src([&](double r) { return 2.0 * std::log(r) - rho(r); }, 1e-8, 16.0);
    Density1D tgt([&](double r) { return 2.0 * std::log(r) - rho(r) - std::log(std::cosh(r)); },
                  1e-8, 16.0);
    const auto want = quantile_map(src, tgt, seeds).values();
    const auto got = lim.values();
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        CHECK(got[k] == Approx(want[k]).margin(5e-3));
        CHECK(got[k] <= seeds[k] + 1e-6);  // non-decreasing multiplier contracts inward
    }
}

TEST_CASE("seeds leaving the window are flagged, excluded, and timestamped", "[flow]") {
    // Expanding pair a = 1, b = 4 doubles scale beyond the narrow window.
    const Grid g = Grid::line(-3.0, 3.0, 61);
    AdvectionField1D field(-2.0, 2.0);
    for (double t : constant_times(0.01, 2.0))
        field.append(gaussian_field_1d(g, gaussian_m(1.0, 4.0, t), t));

    const std::vector<double> seeds{0.5, 1.8};
    auto ens = integrate_forward(field, seeds, 2.0);
    REQUIRE(ens.tracks.size() == 2);
    CHECK(ens.escaped_count() == 1);

    CHECK_FALSE(ens.tracks[0].escaped);
    const double l2 = std::sqrt(5.0 - 4.0 * std::exp(-4.0));  // exp of int m
    CHECK(ens.tracks[0].x == Approx(0.5 * l2).margin(1e-3));

    CHECK(ens.tracks[1].escaped);
    CHECK(ens.tracks[1].escape_time > 0.0);
    CHECK(ens.tracks[1].escape_time < 0.1);

    auto cert = expansion_certificate(ens);
    CHECK(cert.used == 1);
    CHECK(cert.escaped == 1);
    CHECK(cert.worst > 0.0);

    // Round trip silently drops the escaped seed and stays exact-inverse.
    CHECK(round_trip_error(field, seeds, 2.0) < 1e-6);

    // A stop tolerance that is never reached yields a partial limit map.
    auto lim = limit_map(field, {0.5}, 1e-12);
    CHECK_FALSE(lim.complete);
    CHECK(lim.t_star == Approx(2.0));

    // A seed born outside the window is escaped at the start time.
    auto dead = integrate_forward(field, {2.5}, 1.0);
    CHECK(dead.tracks[0].escaped);
    CHECK(dead.tracks[0].escape_time == Approx(0.0).margin(1e-15));
}

TEST_CASE("1d push-forward residual separates exact and perturbed maps", "[flow]") {
    Density1D src([](double x) { return -std::log(std::cosh(x)); }, -20.0, 20.0);
    Density1D tgt([](double x) { return -std::log(std::cosh(x)) - 0.5 * x * x; }, -20.0, 20.0);
    const auto xs = linspace(-2.5, 2.5, 21);

    CHECK(pushforward_residual(xs, xs, src, src) == Approx(0.0).margin(1e-15));

    const auto txs = quantile_map(src, tgt, xs).values();
    CHECK(pushforward_residual(xs, txs, src, tgt) < 1e-9);

    auto shifted = txs;
    for (double& t : shifted) t += 0.1;
    CHECK(pushforward_residual(xs, shifted, src, tgt) > 0.01);

    CHECK_THROWS_AS(pushforward_residual(xs, std::vector<double>{0.0}, src, tgt),
                    std::invalid_argument);
}

TEST_CASE("planar two-sample report separates equal and shifted laws", "[flow]") {
    Eigen::Matrix2d l;
    l << 1.2, 0.1, 0.1, 0.8;
    auto draw = [&](std::uint64_t seed) {
        Rng rng(seed);
        std::vector<Eigen::Vector2d> out;
        for (int i = 0; i < 1500; ++i) {
            Eigen::Vector2d z(rng.normal(), rng.normal());
            out.push_back(l * z);
        }
        return out;
    };
    const auto a = draw(11);
    const auto b = draw(12);

    auto same = pushforward_residual_2d(a, b);
    CHECK(same.ks_x < 0.07);
    CHECK(same.ks_y < 0.07);
    CHECK(same.statistic() == std::max(same.ks_x, same.ks_y));
    CHECK(same.energy_distance < 0.01);
    CHECK(same.energy_distance > -1e-3);

    auto shifted = b;
    for (auto& p : shifted) p(0) += 0.5;
    auto diff = pushforward_residual_2d(a, shifted);
    CHECK(diff.ks_x > 0.1);
    CHECK(diff.energy_distance > 0.02);

    CHECK_THROWS_AS(pushforward_residual_2d({}, b), std::invalid_argument);
}

TEST_CASE("log-concavity monitor tracks curvature across modes", "[flow]") {
    SECTION("flat field scores exactly zero") {
        const Grid g = Grid::line(-4.0, 4.0, 33);
        LogconcavityMonitor mon;
        mon.observe(GridField(g, Boundary::reflecting, std::vector<double>(g.nx, 1.0), 0.0));
        CHECK(mon.min_eigenvalue() == Approx(0.0).margin(0.0));
        CHECK(mon.pass(0.0));
    }

    SECTION("heavy-tailed initial data stays within the grid tolerance") {
        const Grid g = Grid::line(-16.0, 16.0, 1601);
        std::vector<double> v(g.nx);
        for (std::size_t i = 0; i < g.nx; ++i) v[i] = 1.0 / std::cosh(g.x(i));
        LogconcavityMonitor mon;
        mon.observe(GridField(g, Boundary::reflecting, std::move(v), 0.0));
        CHECK(mon.min_eigenvalue() >= -1e-9);  // roundoff of -log f second differences
        CHECK(mon.pass(10.0 * g.hx));
    }

    SECTION("cutoff run stays log-concave and tracks the Gaussian curvature") {
        // Monitoring uses the cutoff pipeline: -log(chi) is convex, the field
        // vanishes at the boundary, and no reflecting-wall layer forms. The
        // in-core minimum then equals the bulk curvature m(t).
        const Grid g = Grid::line(-8.0, 8.0, 801);
        Stepper1D st(g, [](double x) { return 0.5 * x * x; }, Boundary::dirichlet_cutoff);
        GridField f = gaussian_field_1d(g, 1.0, 0.0);
        f.bc = Boundary::dirichlet_cutoff;
        apply_cutoff(f, 8.0);
        LogconcavityMonitor mon;
        EvolveOptions opt;
        opt.dt = 0.5 * st.positivity_dt_limit();
        opt.horizon = 1.0;
        opt.snapshot_times = {0.25, 0.5, 1.0};
        evolve(st, f, opt,
               [&](const GridField& s, const SnapshotDiagnostics&) { mon.observe(s); });
        REQUIRE(mon.series().size() == 4);
        CHECK(mon.min_eigenvalue() > 0.0);
        CHECK(mon.pass(1e-6));
        for (const auto& [t, e] : mon.series())
            CHECK(e == Approx(gaussian_m(1.0, 1.0, t)).margin(5e-3));
    }

    SECTION("reflecting walls are reported, not hidden") {
        // A no-flux wall flattens -log f once the tail enters the core; the
        // monitor must surface that as a negative eigenvalue.
        const Grid g = Grid::line(-8.0, 8.0, 801);
        Stepper1D st(g, [](double x) { return 0.5 * x * x; }, Boundary::reflecting);
        GridField f = gaussian_field_1d(g, 1.0, 0.0);
        LogconcavityMonitor mon;
        EvolveOptions opt;
        opt.dt = 1e-3;
        opt.horizon = 0.25;
        evolve(st, f, opt,
               [&](const GridField& s, const SnapshotDiagnostics&) { mon.observe(s); });
        CHECK(mon.min_eigenvalue() < -1.0);
        CHECK_FALSE(mon.pass(10.0 * g.hx));
    }

    SECTION("radial mode adds the tangential direction") {
        const Grid g = Grid::radial_line(10.0, 200, 3);
        std::vector<double> v(g.nx);
        for (std::size_t i = 0; i < g.nx; ++i) v[i] = std::exp(-0.5 * sq(g.x(i)));
        LogconcavityMonitor mon(LogconcavityMonitor::Mode::radial, 3);
        mon.observe(GridField(g, Boundary::reflecting, std::move(v), 0.0));
        CHECK(mon.min_eigenvalue() == Approx(1.0).margin(1e-9));
        CHECK_THROWS_AS(LogconcavityMonitor(LogconcavityMonitor::Mode::radial, 1),
                        std::invalid_argument);
    }

    SECTION("planar quadratic recovers the exact minimum eigenvalue") {
        const Grid g = Grid::box(-5.0, 5.0, 61, -5.0, 5.0, 61);
        std::vector<double> v(g.size());
        for (std::size_t j = 0; j < g.ny; ++j)
            for (std::size_t i = 0; i < g.nx; ++i) {
                const double x = g.x(i), y = g.y(j);
                v[g.idx(i, j)] = std::exp(-(x * x + 0.4 * x * y + y * y));
            }
        LogconcavityMonitor mon;
        mon.observe(GridField(g, Boundary::reflecting, std::move(v), 0.0));
        CHECK(mon.min_eigenvalue() == Approx(1.6).margin(1e-9));
    }

    SECTION("violations are detected") {
        const Grid g = Grid::line(-3.0, 3.0, 33);
        std::vector<double> v(g.nx);
        for (std::size_t i = 0; i < g.nx; ++i) v[i] = std::exp(0.5 * sq(g.x(i)));
        LogconcavityMonitor mon;
        mon.observe(GridField(g, Boundary::reflecting, std::move(v), 0.0));
        CHECK(mon.min_eigenvalue() == Approx(-1.0).margin(1e-9));
        CHECK_FALSE(mon.pass(0.1));
    }
}

TEST_CASE("continuity residual shrinks quadratically with snapshot spacing", "[flow]") {
    const Grid g = Grid::line(-8.0, 8.0, 401);
    Stepper1D st(g, [](double x) { return 0.5 * x * x; }, Boundary::reflecting);
    GridField f = gaussian_field_1d(g, 1.0, 0.0);

    std::vector<GridField> snaps;
    EvolveOptions opt;
    opt.dt = 1e-3;
    opt.horizon = 0.05;
    opt.snapshot_times = {0.025, 0.05};
    evolve(st, f, opt,
           [&](const GridField& s, const SnapshotDiagnostics&) { snaps.push_back(s); });
    REQUIRE(snaps.size() == 3);

    const double r_small = continuity_residual(st, snaps[0], snaps[1]);
    const double r_big = continuity_residual(st, snaps[0], snaps[2]);
    CHECK(r_big < 0.05);
    CHECK(r_big / r_small == Approx(4.0).margin(1.0));
    CHECK_THROWS_AS(continuity_residual(st, snaps[1], snaps[0]), std::invalid_argument);

    const Grid g2 = Grid::box(-6.0, 6.0, 41, -6.0, 6.0, 41);
    Stepper2D st2(
        g2, [](double x, double y) { return 0.5 * (x * x + y * y); }, Boundary::reflecting);
    GridField f2 = gaussian_field_2d(g2, 1.0, 1.0, 0.0);
    std::vector<GridField> snaps2;
    EvolveOptions opt2;
    opt2.dt = 1e-3;
    opt2.horizon = 0.04;
    opt2.snapshot_times = {0.02, 0.04};
    evolve(st2, f2, opt2,
           [&](const GridField& s, const SnapshotDiagnostics&) { snaps2.push_back(s); });
    const double q_small = continuity_residual(st2, snaps2[0], snaps2[1]);
    const double q_big = continuity_residual(st2, snaps2[0], snaps2[2]);
    CHECK(q_big / q_small > 2.5);
    CHECK(q_big / q_small < 6.0);
}
