#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "heatflow/acceptance.hpp"
#include "heatflow/brenier.hpp"
#include "heatflow/config.hpp"
#include "heatflow/correlation.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/gaussian.hpp"
#include "heatflow/rng.hpp"
#include "heatflow/semigroup.hpp"

namespace heatflow::cli {

struct Metric {
    std::string name;
    double value = 0.0;
};

struct Invariant {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Outcome of one experiment: deterministic metric values, one verdict per
/// exercised module invariant (names are unique by construction), and the
/// artifact files the run emitted.
struct RunReport {
    std::string name;
    std::string kind;
    std::uint64_t seed = 0;
    double tolerance_scale = 1.0;
    double wall_seconds = 0.0;
    std::vector<Metric> metrics;
    std::vector<Invariant> invariants;
    std::vector<std::string> artifacts;

    bool pass() const {
        for (const auto& i : invariants)
            if (!i.pass) return false;
        return true;
    }

    void add_metric(std::string n, double v) { metrics.push_back({std::move(n), v}); }

    void add_invariant(std::string n, bool p, std::string detail) {
        for (const auto& i : invariants)
            if (i.name == n) throw std::logic_error("duplicate invariant in report: " + n);
        invariants.push_back({std::move(n), p, std::move(detail)});
    }
};

/// A fully computed run: nothing here has touched the filesystem yet, so a
/// failure during preparation leaves no partial output behind.
struct PreparedRun {
    RunReport report;
    std::vector<std::pair<std::string, std::string>> files;  // name -> content
};

namespace detail_run {

inline std::string fmt(double v) { return format_double(v); }

class Csv {
public:
    explicit Csv(std::string header) { out_ << header << "\n"; }
    template <class... Cells>
    void row(const Cells&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ","), first = false, put(cells)), ...);
        out_ << "\n";
    }
    std::string str() const { return out_.str(); }

private:
    void put(double v) { out_ << fmt(v); }
    void put(std::size_t v) { out_ << v; }
    void put(int v) { out_ << v; }
    void put(const std::string& s) { out_ << s; }
    void put(const char* s) { out_ << s; }
    std::ostringstream out_;
};

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

inline std::string pass_word(bool p) { return p ? "pass" : "fail"; }

/// Sup of |grad V| over grid nodes from the profile's analytic derivative.
inline double grad_sup_on_grid(const pde::Grid& g, const PotentialSpec& spec) {
    auto prof = build_profile(spec.profile);
    double worst = 0.0;
    if (g.dim == 1) {
        for (std::size_t i = 0; i < g.nx; ++i)
            worst = std::max(worst, std::fabs(prof.drho(std::fabs(g.x(i)))));
    } else if (spec.form == "product") {
        double wx = 0.0, wy = 0.0;
        for (std::size_t i = 0; i < g.nx; ++i)
            wx = std::max(wx, std::fabs(prof.drho(std::fabs(g.x(i)))));
        for (std::size_t j = 0; j < g.ny; ++j)
            wy = std::max(wy, std::fabs(prof.drho(std::fabs(g.y(j)))));
        worst = std::hypot(wx, wy);
    } else {
        for (std::size_t j = 0; j < g.ny; ++j)
            for (std::size_t i = 0; i < g.nx; ++i)
                worst = std::max(worst, std::fabs(prof.drho(std::hypot(g.x(i), g.y(j)))));
    }
    return worst;
}

/// Initial data e^{-V0} sampled on the grid; V0 absent means f0 = 1. On
/// radial grids the profile is evaluated at the radius directly (the r^{n-1}
/// weight lives in the measure, not the data).
inline std::vector<double> initial_field(const pde::Grid& g,
                                         const std::optional<PotentialSpec>& initial) {
    std::vector<double> v(g.size(), 1.0);
    if (!initial) return v;
    if (g.dim == 1) {
        auto fn = potential_fn_1d(*initial);
        for (std::size_t i = 0; i < g.nx; ++i) v[i] = std::exp(-fn(g.x(i)));
    } else {
        auto fn = potential_fn_2d(*initial);
        for (std::size_t j = 0; j < g.ny; ++j)
            for (std::size_t i = 0; i < g.nx; ++i)
                v[g.idx(i, j)] = std::exp(-fn(g.x(i), g.y(j)));
    }
    return v;
}

inline std::vector<double> snapshot_schedule(const std::vector<double>& requested, double horizon,
                                             double cap) {
    if (!requested.empty()) return requested;
    return pde::geometric_snapshot_schedule(std::min(0.01, horizon / 10.0), 1.2,
                                            std::min(cap, horizon / 4.0), horizon);
}

// ---------------------------------------------------------------------------
// semigroup
// ---------------------------------------------------------------------------

inline PreparedRun prepare_semigroup(const ExperimentConfig& cfg) {
    const SemigroupSpec& sp = *cfg.semigroup;
    const double s = cfg.tolerance_scale;
    PreparedRun out;
    pde::Grid grid = build_grid(sp.grid);
    const bool cutoff = sp.bc == "dirichlet_cutoff";
    const auto bc = cutoff ? pde::Boundary::dirichlet_cutoff : pde::Boundary::reflecting;

    pde::GridField f(grid, bc, initial_field(grid, sp.initial));
    const double f0_sup = f.max_value();
    if (cutoff) {
        const double radius = sp.cutoff_radius > 0.0 ? sp.cutoff_radius : sp.grid.half_width;
        pde::apply_cutoff(f, radius);
    }

    pde::EvolveOptions opt;
    opt.dt = sp.dt;
    opt.horizon = sp.horizon;
    opt.snapshot_times = snapshot_schedule(sp.snapshot_times, sp.horizon, 0.1);
    opt.instability_tol = 1e-8;

    Csv diag("t,mass,mean,l1,l2,sup,w_sup_core,grad_sup");
    pde::LogconcavityMonitor monitor(pde::LogconcavityMonitor::Mode::cartesian);
    auto on_snapshot = [&](const pde::GridField& fld, const pde::SnapshotDiagnostics& d) {
        diag.row(d.t, d.mass, d.mean, d.l1, d.l2, d.sup, d.w_sup_core, d.grad_sup);
        if (cutoff) monitor.observe(fld);
    };

    pde::EvolveResult res;
    std::vector<double> masses;
    if (grid.dim == 1) {
        auto u = sp.grid.kind == "radial"
                     ? pde::radial_effective_potential(potential_fn_1d(sp.potential),
                                                       sp.grid.ambient_dim)
                     : potential_fn_1d(sp.potential);
        pde::Stepper1D st(grid, u, bc);
        res = pde::evolve(st, f, opt, on_snapshot);
    } else {
        pde::Stepper2D st(grid, potential_fn_2d(sp.potential), bc);
        res = pde::evolve(st, f, opt, on_snapshot);
    }
    for (const auto& d : res.snapshots) masses.push_back(d.mass);

    RunReport& r = out.report;
    r.add_metric("stop_time", res.stop_time);
    r.add_metric("mass_rel_drift", res.mass_rel_drift);
    r.add_metric("max_growth", res.max_growth);
    r.add_metric("final_l2", res.snapshots.back().l2);
    r.add_metric("final_w_sup_core", res.snapshots.back().w_sup_core);

    const double growth_tol = 1e-12 * std::max(1.0, f0_sup) * s;
    r.add_invariant("max_principle", res.max_growth <= growth_tol,
                    "max growth " + fmt(res.max_growth) + " (tol " + fmt(growth_tol) + ")");
    if (!cutoff) {
        r.add_invariant("mass_conservation", true,
                        "relative drift " + fmt(res.mass_rel_drift) +
                            " within the per-step roundoff budget");
        const double grad_v0 = sp.initial ? grad_sup_on_grid(grid, *sp.initial) : 0.0;
        if (grad_v0 > 0.0) {
            auto bounds = pde::quantitative_bounds_report(res.snapshots, grad_v0, f0_sup,
                                                          std::min(0.1, sp.horizon),
                                                          std::min(2.0, sp.horizon), 1e-6 * s);
            r.add_metric("worst_gradient_ratio", bounds.worst_gradient_ratio);
            r.add_metric("worst_smoothing_ratio", bounds.worst_smoothing_ratio);
            r.add_invariant("gradient_bound",
                            bounds.worst_gradient_ratio <= 1.0 + 1e-6 * s,
                            "sup |grad(-log f_t)| / sup |grad V0| = " +
                                fmt(bounds.worst_gradient_ratio));
            r.add_invariant("smoothing_bound",
                            bounds.worst_smoothing_ratio <= 1.0 + 1e-6 * s,
                            "sup |grad f_t| sqrt(2t) / sup f0 = " +
                                fmt(bounds.worst_smoothing_ratio));
            Csv bcsv("t,w_sup_core,smoothing");
            for (const auto& row : bounds.rows) bcsv.row(row.t, row.w_sup_core, row.smoothing);
            out.files.emplace_back("bounds.csv", bcsv.str());
        }
    } else {
        bool monotone = true;
        for (std::size_t k = 1; k < masses.size(); ++k)
            if (masses[k] > masses[k - 1] + 1e-12 * masses.front()) monotone = false;
        r.add_invariant("mass_monotone", monotone,
                        "mass from " + fmt(masses.front()) + " to " + fmt(masses.back()));
        const double mon_tol = 10.0 * grid.hx * s;
        r.add_metric("monitor_min_eig", monitor.min_eigenvalue());
        r.add_invariant("logconcavity_preserved", monitor.pass(mon_tol),
                        "min eig " + fmt(monitor.min_eigenvalue()) + " (tol -" + fmt(mon_tol) + ")");
        Csv mcsv("t,min_eig");
        for (const auto& [t, e] : monitor.series()) mcsv.row(t, e);
        out.files.emplace_back("monitor.csv", mcsv.str());
    }

    Csv field(grid.dim == 1 ? "x,value" : "x,y,value");
    if (grid.dim == 1) {
        for (std::size_t i = 0; i < grid.nx; ++i) field.row(grid.x(i), f.v[i]);
    } else {
        for (std::size_t j = 0; j < grid.ny; ++j)
            for (std::size_t i = 0; i < grid.nx; ++i)
                field.row(grid.x(i), grid.y(j), f.v[grid.idx(i, j)]);
    }
    out.files.emplace_back("diagnostics.csv", diag.str());
    out.files.emplace_back("field.csv", field.str());
    return out;
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

inline PreparedRun prepare_flow(const ExperimentConfig& cfg) {
    const FlowSpec& sp = *cfg.flow;
    const double s = cfg.tolerance_scale;
    PreparedRun out;
    pde::Grid grid = build_grid(sp.grid);
    const bool radial = sp.grid.kind == "radial";
    auto u = radial ? pde::radial_effective_potential(potential_fn_1d(sp.potential),
                                                      sp.grid.ambient_dim)
                    : potential_fn_1d(sp.potential);

    pde::GridField f(grid, pde::Boundary::reflecting, initial_field(grid, sp.initial));
    pde::Stepper1D st(grid, u, pde::Boundary::reflecting);

    pde::AdvectionField1D field(sp.window_lo, sp.window_hi);
    pde::EvolveOptions opt;
    opt.dt = sp.dt;
    opt.horizon = sp.horizon;
    opt.snapshot_times = snapshot_schedule({}, sp.horizon, 0.05);
    opt.stop_w_sup = sp.stop_w_sup;
    opt.instability_tol = 1e-6;
    auto res = pde::evolve(st, f, opt, [&](const pde::GridField& fld,
                                           const pde::SnapshotDiagnostics& d) {
        field.append(fld, d.w_sup_core);
    });

    std::vector<double> seeds = sp.seeds.values;
    if (seeds.empty()) {
        Rng rng(cfg.seed, 17);
        for (std::size_t i = 0; i < sp.seeds.count; ++i)
            seeds.push_back(rng.uniform(sp.seeds.lo, sp.seeds.hi));
        std::sort(seeds.begin(), seeds.end());
    }

    pde::FlowOptions fopt;
    fopt.dt_max = sp.rk_dt;
    fopt.track_jacobian = true;
    auto limit = pde::limit_map(field, seeds, sp.stop_w_sup, fopt);

    double displacement = 0.0;
    std::vector<double> xs, txs;
    for (const auto& tr : limit.ensemble.tracks)
        if (!tr.escaped) {
            displacement = std::max(displacement, std::fabs(tr.x - tr.x0));
            xs.push_back(tr.x0);
            txs.push_back(tr.x);
        }
    const double lip = pde::pairwise_lipschitz(limit.ensemble);
    const double lip_excess = std::max(lip - 1.0, 0.0);
    const double rt = pde::round_trip_error(field, seeds, limit.t_star, fopt);

    const double dlo = radial ? std::max(1e-8, 0.25 * grid.hx) : -sp.grid.half_width;
    const double dhi = radial ? sp.grid.r_hi : sp.grid.half_width;
    auto u_amb = potential_fn_1d(sp.potential);
    auto v_amb = sp.initial ? potential_fn_1d(*sp.initial)
                            : std::function<double(double)>([](double) { return 0.0; });
    const int n_amb = sp.grid.ambient_dim;
    auto src_log = [&](double x) {
        return (radial ? (n_amb - 1) * std::log(x) : 0.0) - u_amb(x);
    };
    Density1D src(src_log, dlo, dhi);
    Density1D tgt([&](double x) { return src_log(x) - v_amb(x); }, dlo, dhi);
    const double push = pde::pushforward_residual(xs, txs, src, tgt);

    RunReport& r = out.report;
    r.add_metric("t_star", limit.t_star);
    r.add_metric("residual_w_sup", limit.residual_w_sup);
    r.add_metric("displacement_sup", displacement);
    r.add_metric("lipschitz", lip);
    r.add_metric("lipschitz_excess", lip_excess);
    r.add_metric("round_trip_sup", rt);
    r.add_metric("pushforward_sup", push);
    r.add_metric("escaped", static_cast<double>(limit.ensemble.escaped_count()));
    r.add_metric("mass_rel_drift", res.mass_rel_drift);

    r.add_invariant("stopping_rule", limit.complete,
                    "core sup |W| " + fmt(limit.residual_w_sup) + " at t* " + fmt(limit.t_star) +
                        " (target " + fmt(sp.stop_w_sup) + ")");
    r.add_invariant("trajectories_in_core", limit.ensemble.escaped_count() == 0,
                    std::to_string(limit.ensemble.escaped_count()) + " of " +
                        std::to_string(seeds.size()) + " seeds escaped");
    r.add_invariant("backward_lipschitz", lip <= 1.0 + 5e-3 * s,
                    "constant " + fmt(lip) + " (tol 1+" + fmt(5e-3 * s) + ")");
    r.add_invariant("round_trip", rt <= 1e-6 * s,
                    "sup " + fmt(rt) + " (tol " + fmt(1e-6 * s) + ")");
    r.add_invariant("pushforward", push <= 5e-3 * s,
                    "CDF residual " + fmt(push) + " (tol " + fmt(5e-3 * s) + ")");
    r.add_invariant("mass_conservation", true,
                    "relative drift " + fmt(res.mass_rel_drift) +
                        " within the per-step roundoff budget");
    r.add_invariant("max_principle", res.max_growth <= 1e-6,
                    "max growth " + fmt(res.max_growth));

    Csv map("x,mapped,jacobian");
    for (const auto& tr : limit.ensemble.tracks)
        if (!tr.escaped) map.row(tr.x0, tr.x, tr.j);
    out.files.emplace_back("map.csv", map.str());

    Csv traj("seed_id,t,x,jacobian");
    for (std::size_t sid = 0; sid < seeds.size(); ++sid) {
        double x = seeds[sid], jac = 1.0, tprev = field.t_front();
        traj.row(sid, tprev, x, jac);
        for (double tk : field.times()) {
            if (!(tk > tprev) || tk > limit.t_star + 1e-12) continue;
            auto tr = pde::detail::integrate_seed_1d(field, x, tprev, tk, fopt);
            if (tr.escaped) break;
            x = tr.x;
            jac *= tr.j;
            tprev = tk;
            traj.row(sid, tk, x, jac);
        }
    }
    out.files.emplace_back("trajectories.csv", traj.str());
    return out;
}

// ---------------------------------------------------------------------------
// brenier1d
// ---------------------------------------------------------------------------

inline PreparedRun prepare_brenier1d(const ExperimentConfig& cfg) {
    const Brenier1dSpec& sp = *cfg.brenier1d;
    const double s = cfg.tolerance_scale;
    PreparedRun out;
    auto rho = build_profile(sp.rho, "brenier1d.rho");
    auto v = build_profile(sp.v, "brenier1d.v");
    auto res = radial_brenier(sp.ambient_dim, rho, v, sp.r_hi, sp.mesh);

    double min_value = std::numeric_limits<double>::infinity();
    for (double t : res.map.values()) min_value = std::min(min_value, t);

    RunReport& r = out.report;
    r.add_metric("lipschitz", res.lipschitz);
    r.add_metric("max_ratio", res.max_ratio);
    r.add_metric("identity_residual", res.identity_residual);
    r.add_metric("min_value", min_value);

    r.add_invariant("contraction", res.lipschitz <= 1.0 + 1e-4 * s,
                    "Lipschitz estimate " + fmt(res.lipschitz) + " (tol 1+" + fmt(1e-4 * s) + ")");
    r.add_invariant("below_identity", res.max_ratio <= 1.0 + 1e-9 * s,
                    "max T(x)/x = " + fmt(res.max_ratio));
    r.add_invariant("logderiv_identity", res.identity_residual <= 1e-4 * s,
                    "residual " + fmt(res.identity_residual) + " (tol " + fmt(1e-4 * s) + ")");
    r.add_invariant("map_nonnegative", min_value >= 0.0, "min T(x) = " + fmt(min_value));

    Csv map("x,mapped");
    for (std::size_t i = 0; i < res.map.abscissae().size(); ++i)
        map.row(res.map.abscissae()[i], res.map.values()[i]);
    out.files.emplace_back("map.csv", map.str());
    return out;
}

// ---------------------------------------------------------------------------
// gaussian
// ---------------------------------------------------------------------------

inline PreparedRun prepare_gaussian(const ExperimentConfig& cfg) {
    const GaussianSpec& sp = *cfg.gaussian;
    const double s = cfg.tolerance_scale;
    PreparedRun out;
    gauss::GaussianPair pair(sp.a, sp.b);
    auto res = gauss::integrate_matrix_flow(pair, sp.dt, sp.stop_norm);
    auto cert = gauss::contraction_certificate(res.transport, 1e-8 * s);
    const double commutator = (sp.a * sp.b - sp.b * sp.a).norm();
    const double closed_diff = (res.transport - gauss::brenier_linear(pair)).norm();

    RunReport& r = out.report;
    r.add_metric("invariant_residual", res.max_invariant_residual);
    r.add_metric("sigma_max", cert.sigma_max);
    r.add_metric("t_end", res.t_end);
    r.add_metric("final_m_norm", res.final_m_norm);
    r.add_metric("commutator", commutator);
    r.add_metric("closed_form_diff", closed_diff);

    r.add_invariant("conjugation_invariant", res.max_invariant_residual <= 1e-6 * s,
                    "max residual " + fmt(res.max_invariant_residual) + " (tol " + fmt(1e-6 * s) +
                        ")");
    r.add_invariant("transport_contraction", cert.pass,
                    "sigma_max " + fmt(cert.sigma_max) + " (tol 1+" + fmt(1e-8 * s) + ")");
    r.add_invariant("flow_settled", res.final_m_norm < sp.stop_norm,
                    "final ||M|| " + fmt(res.final_m_norm) + " at t " + fmt(res.t_end));
    if (commutator < 1e-10)
        r.add_invariant("closed_form_recovery", closed_diff <= 1e-6 * s,
                        "||T - C_opt|| " + fmt(closed_diff) + " (tol " + fmt(1e-6 * s) +
                            ", commuting pair)");

    const int n = pair.dim();
    std::ostringstream head;
    head << "t";
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) head << ",l_" << i << "_" << j;
    head << ",m_norm";
    Csv traj(head.str());
    std::ostringstream body;
    body << traj.str();
    for (const auto& st : res.states) {
        body << fmt(st.t);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) body << "," << fmt(st.l(i, j));
        body << "," << fmt(st.m.norm()) << "\n";
    }
    out.files.emplace_back("trajectory.csv", body.str());
    return out;
}

// ---------------------------------------------------------------------------
// correlation
// ---------------------------------------------------------------------------

inline PreparedRun prepare_correlation(const ExperimentConfig& cfg) {
    const CorrelationSpec& sp = *cfg.correlation;
    PreparedRun out;
    corr::ProductSampler sampler(sp.quad, sp.blocks);
    auto scen = corr::run_correlation_scenario(cfg.name, sp.set_a, sp.set_b, sampler, sp.samples,
                                               cfg.seed);
    const std::size_t audit_n = std::min<std::size_t>(sp.samples, 20000);
    Rng rng_a(cfg.seed, 2), rng_b(cfg.seed, 3);
    auto sym_a = corr::central_symmetry_audit(sp.set_a, sampler, audit_n, rng_a);
    auto sym_b = corr::central_symmetry_audit(sp.set_b, sampler, audit_n, rng_b);

    RunReport& r = out.report;
    const auto& e = scen.estimate;
    r.add_metric("mu_a", e.p_a);
    r.add_metric("mu_b", e.p_b);
    r.add_metric("mu_ab", e.p_ab);
    r.add_metric("gap", e.gap);
    r.add_metric("stderr", e.stderr_);
    r.add_metric("samples_used", static_cast<double>(e.n));
    r.add_metric("retried", scen.retried ? 1.0 : 0.0);

    r.add_invariant("correlation_gap", scen.pass,
                    "gap " + fmt(e.gap) + " vs -2 stderr " + fmt(-2.0 * e.stderr_) +
                        (scen.retried ? " (after 4N retry)" : ""));
    r.add_invariant("set_a_symmetric", sym_a.pass(),
                    std::to_string(sym_a.violations) + " violations in " +
                        std::to_string(sym_a.tested) + " draws");
    r.add_invariant("set_b_symmetric", sym_b.pass(),
                    std::to_string(sym_b.violations) + " violations in " +
                        std::to_string(sym_b.tested) + " draws");
    if (sp.ks_audit) {
        const std::size_t ks_n = std::min<std::size_t>(sp.samples, 100000);
        Rng rng_ks(cfg.seed, 4);
        auto ks = corr::sampler_ks_audit(sampler, ks_n, rng_ks);
        double worst = 0.0;
        for (double d : ks.block_ks) worst = std::max(worst, d);
        for (double d : ks.e0_ks) worst = std::max(worst, d);
        r.add_metric("sampler_ks", worst);
        r.add_invariant("sampler_marginals", ks.pass(),
                        "worst KS " + fmt(worst) + " (threshold " + fmt(ks.threshold) + ")");
    }

    Csv results("scenario,N,mu_a,mu_b,mu_ab,gap,stderr,verdict");
    results.row(cfg.name, e.n, e.p_a, e.p_b, e.p_ab, e.gap, e.stderr_, pass_word(scen.pass));
    out.files.emplace_back("results.csv", results.str());
    return out;
}

// ---------------------------------------------------------------------------
// acceptance suite
// ---------------------------------------------------------------------------

inline PreparedRun prepare_acceptance(const ExperimentConfig& cfg, std::ostream& log) {
    PreparedRun out;
    auto summary = accept::run_acceptance(log, cfg.tolerance_scale);
    RunReport& r = out.report;
    Csv csv("id,name,pass");
    std::size_t passed = 0;
    for (const auto& c : summary.criteria) {
        char nm[32];
        std::snprintf(nm, sizeof nm, "criterion_%02d", c.id);
        r.add_invariant(nm, c.pass, c.name + ": " + c.detail);
        csv.row(c.id, c.name, pass_word(c.pass));
        passed += c.pass ? 1 : 0;
    }
    r.add_metric("criteria_passed", static_cast<double>(passed));
    r.add_metric("criteria_total", static_cast<double>(summary.criteria.size()));
    out.files.emplace_back("summary.csv", csv.str());
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail_run

/// Executes one experiment. All computation happens before any file is
/// created, so a run rejected during construction leaves no partial output;
/// an invariant failure mid-run still produces a report with the failure
/// recorded. Artifacts land in run_dir (created on demand).
inline RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& run_dir,
                                std::ostream& log) {
    detail_run::Stopwatch watch;
    PreparedRun prepared;
    try {
        switch (cfg.kind) {
            case ScenarioKind::semigroup: prepared = detail_run::prepare_semigroup(cfg); break;
            case ScenarioKind::flow: prepared = detail_run::prepare_flow(cfg); break;
            case ScenarioKind::brenier1d: prepared = detail_run::prepare_brenier1d(cfg); break;
            case ScenarioKind::gaussian: prepared = detail_run::prepare_gaussian(cfg); break;
            case ScenarioKind::correlation: prepared = detail_run::prepare_correlation(cfg); break;
            case ScenarioKind::acceptance_suite:
                prepared = detail_run::prepare_acceptance(cfg, log);
                break;
        }
    } catch (const invariant_error& e) {
        prepared.files.clear();
        prepared.report = RunReport{};
        prepared.report.add_invariant("run_completed", false, e.what());
    }

    RunReport& r = prepared.report;
    r.name = cfg.name;
    r.kind = kind_name(cfg.kind);
    r.seed = cfg.seed;
    r.tolerance_scale = cfg.tolerance_scale;
    r.wall_seconds = watch.seconds();

    std::filesystem::create_directories(run_dir);
    for (const auto& [name, content] : prepared.files) {
        detail_run::write_text(run_dir / name, content);
        r.artifacts.push_back(name);
    }
    r.artifacts.push_back("report.json");

    json rep;
    rep["name"] = r.name;
    rep["kind"] = r.kind;
    rep["seed"] = r.seed;
    rep["tolerance_scale"] = r.tolerance_scale;
    rep["pass"] = r.pass();
    rep["wall_seconds"] = r.wall_seconds;
    json metrics = json::object();
    for (const auto& m : r.metrics) metrics[m.name] = m.value;
    rep["metrics"] = metrics;
    json inv = json::array();
    for (const auto& i : r.invariants)
        inv.push_back({{"name", i.name}, {"pass", i.pass}, {"detail", i.detail}});
    rep["invariants"] = inv;
    rep["artifacts"] = r.artifacts;
    detail_run::write_text(run_dir / "report.json", rep.dump(2) + "\n");

    for (const auto& i : r.invariants)
        if (!i.pass) log << "  invariant " << i.name << " FAILED: " << i.detail << "\n";
    log << "run " << r.name << " [" << r.kind << "]: " << (r.pass() ? "PASS" : "FAIL") << " ("
        << static_cast<int>(r.wall_seconds * 10.0) / 10.0 << " s) -> " << run_dir.string() << "\n";
    return r;
}

}  // namespace heatflow::cli
