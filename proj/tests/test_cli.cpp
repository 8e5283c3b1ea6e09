#include <catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "heatflow/config.hpp"
#include "heatflow/runner.hpp"

using namespace heatflow;
using cli::ExperimentConfig;
using cli::parse_config;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

/// Fresh directory under the system temp root, removed on destruction so
/// repeated test runs start clean.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("heatflow-test-" + tag)) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig from_text(const std::string& text) { return parse_config(json::parse(text)); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

cli::RunReport run_into(const ExperimentConfig& cfg, const fs::path& dir) {
    std::ostringstream log;
    return cli::run_experiment(cfg, dir, log);
}

const cli::Invariant* find_invariant(const cli::RunReport& r, const std::string& name) {
    for (const auto& i : r.invariants)
        if (i.name == name) return &i;
    return nullptr;
}

double metric(const cli::RunReport& r, const std::string& name) {
    for (const auto& m : r.metrics)
        if (m.name == name) return m.value;
    FAIL("metric not reported: " + name);
    return 0.0;
}

}  // namespace

TEST_CASE("config: every scenario kind parses from a minimal document") {
    auto semi = from_text(R"({"scenario":"semigroup","semigroup":{
        "potential":{"profile":{"name":"log_cosh"}}}})");
    CHECK(semi.kind == cli::ScenarioKind::semigroup);
    CHECK(semi.name == "semigroup");
    CHECK(semi.seed == 1);

    auto flow = from_text(R"({"scenario":"flow","name":"f1","seed":9,"flow":{
        "potential":{"profile":{"name":"quadratic"}}}})");
    CHECK(flow.kind == cli::ScenarioKind::flow);
    CHECK(flow.seed == 9);
    CHECK(flow.flow->window_hi == 6.0);  // default window is 3/4 of the grid

    auto bren = from_text(R"({"scenario":"brenier1d","brenier1d":{
        "rho":{"name":"log_cosh"},"v":{"name":"quadratic"}}})");
    CHECK(bren.brenier1d->ambient_dim == 3);

    auto gauss = from_text(R"({"scenario":"gaussian","gaussian":{
        "a":[[1.0,0.0],[0.0,2.0]],"b":[[0.5,0.0],[0.0,1.5]]}})");
    CHECK(gauss.gaussian->a.rows() == 2);

    auto corr = from_text(R"({"scenario":"correlation","correlation":{
        "sampler":{"quad":[[1.0]]},
        "sets":{"a":{"kind":"ball","radius":1.0},"b":{"kind":"slab","half_width":0.5}}}})");
    CHECK(corr.correlation->samples == 1000000);

    auto acc = from_text(R"({"scenario":"acceptance-suite","tolerance_scale":2.0})");
    CHECK(acc.kind == cli::ScenarioKind::acceptance_suite);
    CHECK(acc.tolerance_scale == 2.0);
}

TEST_CASE("config: schema violations are rejected with schema_error") {
    auto rejects = [](const std::string& text) {
        CHECK_THROWS_AS(from_text(text), schema_error);
    };
    rejects(R"({})");                                      // missing scenario
    rejects(R"({"scenario":"warp"})");                     // unknown kind
    rejects(R"({"scenario":"flow","flow":{"potential":{"profile":{"name":"quadratic"}}},"extra":1})");
    rejects(R"({"scenario":"flow","semigroup":{}})");      // body does not match kind
    rejects(R"({"scenario":"flow"})");                     // body missing
    rejects(R"({"scenario":"flow","flow":{}})");           // potential missing
    rejects(R"({"scenario":"flow","name":"a/b","flow":{"potential":{"profile":{"name":"quadratic"}}}})");
    rejects(R"({"scenario":"flow","seed":-3,"flow":{"potential":{"profile":{"name":"quadratic"}}}})");
    rejects(R"({"scenario":"flow","tolerance_scale":0,"flow":{"potential":{"profile":{"name":"quadratic"}}}})");
    rejects(R"({"scenario":"semigroup","semigroup":{
        "potential":{"profile":{"name":"nope"}}}})");      // unknown profile
    rejects(R"({"scenario":"semigroup","semigroup":{
        "potential":{"profile":{"name":"power"}}}})");     // power without exponent
    rejects(R"({"scenario":"semigroup","semigroup":{
        "potential":{"profile":{"name":"quadratic"}},"dt":-1}})");
    rejects(R"({"scenario":"semigroup","semigroup":{
        "potential":{"profile":{"name":"quadratic"}},
        "snapshot_times":[0.2,0.1]}})");                   // not increasing
    rejects(R"({"scenario":"semigroup","semigroup":{
        "potential":{"profile":{"name":"quadratic"}},
        "grid":{"kind":"radial","r_hi":8,"nodes":101},"bc":"dirichlet_cutoff"}})");
    rejects(R"({"scenario":"flow","flow":{
        "potential":{"profile":{"name":"quadratic"}},
        "grid":{"kind":"line","half_width":8,"nodes":101},"window":[-9,5]}})");
    rejects(R"({"scenario":"flow","flow":{
        "potential":{"profile":{"name":"quadratic"}},
        "seeds":{"values":[0.0,7.5]}}})");                 // seed outside window
    rejects(R"({"scenario":"gaussian","gaussian":{
        "a":[[1.0,0.9],[0.9,0.5]],"b":[[1.0,0.0],[0.0,1.0]]}})");  // a not PD
    rejects(R"({"scenario":"gaussian","gaussian":{
        "a":[[1.0]],"b":[[1.0]],"dt":0.5}})");             // dt beyond the flow cap
    rejects(R"({"scenario":"brenier1d","brenier1d":{
        "rho":{"name":"quadratic"},"v":{"name":"quadratic"},"r_hi":200}})");
    rejects(R"({"scenario":"correlation","correlation":{
        "sampler":{},"sets":{"a":{"kind":"ball","radius":1},"b":{"kind":"ball","radius":1}}}})");
    rejects(R"({"scenario":"correlation","correlation":{
        "sampler":{"quad":[[1.0]]},
        "sets":{"a":{"kind":"pyramid","radius":1},"b":{"kind":"ball","radius":1}}}})");
    rejects(R"({"scenario":"correlation","correlation":{
        "sampler":{"quad":[[1.0]]},"samples":100,
        "sets":{"a":{"kind":"ball","radius":1},"b":{"kind":"ball","radius":1}}}})");
    rejects(R"({"scenario":"correlation","correlation":{
        "sampler":{"quad":[[-1.0]]},
        "sets":{"a":{"kind":"ball","radius":1},"b":{"kind":"ball","radius":1}}}})");
}

TEST_CASE("config: rejected documents leave nothing on disk") {
    TempDir tmp("no-partials");
    try {
        from_text(R"({"scenario":"flow","flow":{"potential":{"profile":{"name":"cubic"}}}})");
        FAIL("expected schema_error");
    } catch (const schema_error&) {
    }
    CHECK(!fs::exists(tmp.path));
}

TEST_CASE("runner: trivial initial data yields the identity map with zero metrics") {
    auto cfg = from_text(R"({"scenario":"flow","name":"trivial","seed":7,"flow":{
        "potential":{"profile":{"name":"quadratic"}},
        "grid":{"kind":"line","half_width":8,"nodes":201},
        "window":[-5,5],"horizon":0.5,
        "seeds":{"lo":-2,"hi":2,"count":8}}})");
    TempDir tmp("flow-trivial");
    auto rep = run_into(cfg, tmp.path);
    CHECK(rep.pass());
    CHECK(metric(rep, "displacement_sup") == 0.0);
    CHECK(metric(rep, "lipschitz_excess") == 0.0);
    CHECK(metric(rep, "round_trip_sup") == 0.0);
    CHECK(metric(rep, "pushforward_sup") == 0.0);
    CHECK(metric(rep, "t_star") == 0.0);
    CHECK(fs::exists(tmp.path / "map.csv"));
    CHECK(fs::exists(tmp.path / "trajectories.csv"));
    CHECK(fs::exists(tmp.path / "report.json"));
}

TEST_CASE("runner: commuting gaussian pair recovers the closed form") {
    auto cfg = from_text(R"({"scenario":"gaussian","name":"comm","gaussian":{
        "a":[[1.0,0.0],[0.0,2.0]],"b":[[0.5,0.0],[0.0,1.5]]}})");
    TempDir tmp("gauss-comm");
    auto rep = run_into(cfg, tmp.path);
    CHECK(rep.pass());
    CHECK(metric(rep, "closed_form_diff") <= 1e-6);
    const auto* rec = find_invariant(rep, "closed_form_recovery");
    REQUIRE(rec != nullptr);
    CHECK(rec->pass);
    const std::string traj = slurp(tmp.path / "trajectory.csv");
    CHECK(traj.rfind("t,l_0_0,l_0_1,l_1_0,l_1_1,m_norm\n", 0) == 0);
}

TEST_CASE("runner: non-commuting pair reports no closed-form claim") {
    auto cfg = from_text(R"({"scenario":"gaussian","name":"noncomm","gaussian":{
        "a":[[1.0,0.3],[0.3,2.0]],"b":[[0.5,0.0],[0.0,1.5]]}})");
    TempDir tmp("gauss-noncomm");
    auto rep = run_into(cfg, tmp.path);
    CHECK(rep.pass());
    CHECK(find_invariant(rep, "closed_form_recovery") == nullptr);
    CHECK(metric(rep, "commutator") > 1e-3);
    const auto* c = find_invariant(rep, "transport_contraction");
    REQUIRE(c != nullptr);
    CHECK(c->pass);
}

TEST_CASE("runner: tightened tolerances fail in isolation") {
    auto cfg = from_text(R"({"scenario":"gaussian","name":"fault","tolerance_scale":1e-12,
        "gaussian":{"a":[[1.0,0.0],[0.0,2.0]],"b":[[0.5,0.0],[0.0,1.5]]}})");
    TempDir tmp("gauss-fault");
    auto rep = run_into(cfg, tmp.path);
    CHECK(!rep.pass());
    CHECK(!find_invariant(rep, "conjugation_invariant")->pass);
    CHECK(!find_invariant(rep, "closed_form_recovery")->pass);
    CHECK(find_invariant(rep, "transport_contraction")->pass);  // margin survives any scale
    CHECK(fs::exists(tmp.path / "report.json"));                // failure still reported
}

TEST_CASE("runner: reflecting semigroup reports conservation and bounds") {
    auto cfg = from_text(R"({"scenario":"semigroup","name":"reflect","semigroup":{
        "potential":{"profile":{"name":"log_cosh"}},
        "initial":{"profile":{"name":"quadratic"}},
        "grid":{"kind":"line","half_width":8,"nodes":401},
        "dt":1e-3,"horizon":0.3}})");
    TempDir tmp("semi-reflect");
    auto rep = run_into(cfg, tmp.path);
    CHECK(rep.pass());
    for (const char* name :
         {"mass_conservation", "max_principle", "gradient_bound", "smoothing_bound"})
        REQUIRE(find_invariant(rep, name) != nullptr);
    CHECK(metric(rep, "worst_gradient_ratio") <= 1.0 + 1e-6);
    const std::string diag = slurp(tmp.path / "diagnostics.csv");
    CHECK(diag.rfind("t,mass,mean,l1,l2,sup,w_sup_core,grad_sup\n", 0) == 0);
    CHECK(fs::exists(tmp.path / "bounds.csv"));
    CHECK(fs::exists(tmp.path / "field.csv"));
}

TEST_CASE("runner: cutoff semigroup monitors log-concavity and mass decay") {
    auto cfg = from_text(R"({"scenario":"semigroup","name":"cut","semigroup":{
        "potential":{"profile":{"name":"quadratic"}},
        "initial":{"profile":{"name":"quadratic"}},
        "grid":{"kind":"line","half_width":8,"nodes":401},
        "bc":"dirichlet_cutoff","dt":5e-4,"horizon":0.3}})");
    TempDir tmp("semi-cut");
    auto rep = run_into(cfg, tmp.path);
    CHECK(rep.pass());
    for (const char* name : {"mass_monotone", "max_principle", "logconcavity_preserved"})
        REQUIRE(find_invariant(rep, name) != nullptr);
    CHECK(find_invariant(rep, "gradient_bound") == nullptr);  // reflecting-only claim
    CHECK(fs::exists(tmp.path / "monitor.csv"));
}

TEST_CASE("runner: radial transport map artifact is a monotone contraction") {
    auto cfg = from_text(R"({"scenario":"brenier1d","name":"radmap","brenier1d":{
        "ambient_dim":3,"rho":{"name":"log_cosh"},"v":{"name":"quadratic"},"r_hi":16}})");
    TempDir tmp("brenier");
    auto rep = run_into(cfg, tmp.path);
    CHECK(rep.pass());
    CHECK(metric(rep, "lipschitz") <= 1.0 + 1e-4);
    std::ifstream map(tmp.path / "map.csv");
    std::string line;
    std::getline(map, line);
    REQUIRE(line == "x,mapped");
    double prev_x = -1.0, prev_t = -1.0;
    std::size_t rows = 0;
    while (std::getline(map, line)) {
        const auto comma = line.find(',');
        const double x = std::stod(line.substr(0, comma));
        const double t = std::stod(line.substr(comma + 1));
        REQUIRE(x > prev_x);
        REQUIRE(t >= prev_t);
        CHECK(t <= x * (1.0 + 1e-9));
        prev_x = x;
        prev_t = t;
        ++rows;
    }
    CHECK(rows == 2001);
}

TEST_CASE("runner: correlation scenario emits the results row and audits") {
    auto cfg = from_text(R"({"scenario":"correlation","name":"ballslab","seed":11,"correlation":{
        "sampler":{"quad":[[1.0,0.3],[0.3,1.5]]},
        "sets":{"a":{"kind":"ball","radius":1.2},
                "b":{"kind":"intersect","of":[
                    {"kind":"slab","coord":0,"half_width":1.0},
                    {"kind":"slab","coord":1,"half_width":1.5}]}},
        "samples":20000,"ks_audit":true}})");
    TempDir tmp("corr");
    auto rep = run_into(cfg, tmp.path);
    CHECK(rep.pass());
    const std::string results = slurp(tmp.path / "results.csv");
    CHECK(results.rfind("scenario,N,mu_a,mu_b,mu_ab,gap,stderr,verdict\n", 0) == 0);
    CHECK(results.find("ballslab,20000,") != std::string::npos);
    CHECK(results.find(",pass\n") != std::string::npos);
    CHECK(metric(rep, "gap") >= -2.0 * metric(rep, "stderr"));
    for (const char* name :
         {"correlation_gap", "set_a_symmetric", "set_b_symmetric", "sampler_marginals"})
        REQUIRE(find_invariant(rep, name) != nullptr);
}

TEST_CASE("runner: identical config and seed reproduce artifacts byte for byte") {
    auto cfg = from_text(R"({"scenario":"flow","name":"det","seed":5,"flow":{
        "potential":{"profile":{"name":"quadratic"}},
        "initial":{"profile":{"name":"log_cosh"}},
        "grid":{"kind":"radial","r_hi":12,"nodes":601,"ambient_dim":3},
        "window":[0.04,8],"horizon":15,"stop_w_sup":1e-4,
        "seeds":{"lo":0.2,"hi":2.8,"count":12}}})");
    TempDir a("det-a"), b("det-b");
    auto ra = run_into(cfg, a.path);
    auto rb = run_into(cfg, b.path);
    CHECK(ra.pass());
    CHECK(rb.pass());
    for (const char* name : {"map.csv", "trajectories.csv"})
        CHECK(slurp(a.path / name) == slurp(b.path / name));
    REQUIRE(ra.metrics.size() == rb.metrics.size());
    for (std::size_t i = 0; i < ra.metrics.size(); ++i)
        CHECK(ra.metrics[i].value == rb.metrics[i].value);
}

TEST_CASE("runner: duplicate invariant names are a programming error") {
    cli::RunReport rep;
    rep.add_invariant("x", true, "");
    CHECK_THROWS_AS(rep.add_invariant("x", true, ""), std::logic_error);
}
