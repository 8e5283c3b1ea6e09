#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "heatflow/config.hpp"
#include "heatflow/runner.hpp"

namespace {

namespace fs = std::filesystem;
using heatflow::cli::ExperimentConfig;

constexpr int kExitPass = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitSchema = 2;
constexpr int kExitAbort = 3;

/// Exit severity of an exception per the documented contract: schema and
/// precondition violations are configuration errors, everything else that
/// escapes a run is a numerical abort.
int severity_of(const std::exception& e) {
    if (dynamic_cast<const heatflow::schema_error*>(&e)) return kExitSchema;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return kExitSchema;
    if (dynamic_cast<const heatflow::invariant_error*>(&e)) return kExitInvariant;
    return kExitAbort;
}

std::string default_out_root() {
    if (const char* env = std::getenv("HEATFLOW_OUT_ROOT"); env && *env) return env;
    return "heatflow-out";
}

struct RunPlan {
    ExperimentConfig cfg;
    fs::path dir;
};

/// Resolves run directories and rejects collisions, since parallel runs must
/// stay isolated and sequential runs must not silently overwrite each other.
std::vector<RunPlan> plan_runs(std::vector<ExperimentConfig> cfgs, const std::string& out_flag) {
    const fs::path root = out_flag.empty() ? default_out_root() : out_flag;
    std::vector<RunPlan> plans;
    for (auto& cfg : cfgs) {
        fs::path dir = cfg.out_dir.empty() ? root / cfg.name : fs::path(cfg.out_dir);
        for (const auto& p : plans)
            if (p.dir == dir)
                throw heatflow::schema_error("two runs resolve to the same output directory: " +
                                             dir.string() + " (give them distinct names)");
        plans.push_back({std::move(cfg), std::move(dir)});
    }
    return plans;
}

struct RunOutcome {
    int severity = kExitPass;
    std::string log;
    std::string error;
};

RunOutcome execute_one(const RunPlan& plan) {
    RunOutcome out;
    std::ostringstream log;
    try {
        auto report = heatflow::cli::run_experiment(plan.cfg, plan.dir, log);
        out.severity = report.pass() ? kExitPass : kExitInvariant;
    } catch (const std::exception& e) {
        out.severity = severity_of(e);
        out.error = e.what();
    }
    out.log = log.str();
    return out;
}

int run_all(const std::vector<RunPlan>& plans, bool parallel) {
    std::vector<RunOutcome> outcomes(plans.size());
    if (parallel && plans.size() > 1) {
        std::vector<std::thread> workers;
        workers.reserve(plans.size());
        for (std::size_t i = 0; i < plans.size(); ++i)
            workers.emplace_back([&, i] { outcomes[i] = execute_one(plans[i]); });
        for (auto& w : workers) w.join();
    } else {
        for (std::size_t i = 0; i < plans.size(); ++i) outcomes[i] = execute_one(plans[i]);
    }
    int severity = kExitPass;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        std::cout << outcomes[i].log;
        if (!outcomes[i].error.empty())
            std::cerr << "run " << plans[i].cfg.name << ": "
                      << (outcomes[i].severity == kExitAbort ? "numerical abort: " : "error: ")
                      << outcomes[i].error << "\n";
        severity = std::max(severity, outcomes[i].severity);
    }
    return severity;
}

void print_scenarios() {
    std::cout <<
        R"(scenario kinds
  semigroup        grid heat semigroup run: diagnostics, conservation and
                   gradient bounds, optional Dirichlet cutoff with the
                   log-concavity monitor
  flow             advection flow of the semigroup's velocity field: limit
                   transport map with Lipschitz, round-trip and pushforward
                   certificates (line or radial grid)
  brenier1d        monotone quantile transport between radial densities
                   r^(n-1) e^(-rho) and r^(n-1) e^(-rho-v), with contraction
                   certificates
  gaussian         matrix transport flow between centered Gaussians: L-flow
                   integration, conjugation invariant, contraction, and the
                   commuting closed form
  correlation      Monte-Carlo correlation gap mu(A&B) - mu(A)mu(B) >= 0 for
                   symmetric sets under product measures, with symmetry and
                   sampler audits
  acceptance-suite the full acceptance battery (same as the `acceptance`
                   subcommand)

potential profiles (radial catalog)
  quadratic        rho(r) = r^2/2
  log_cosh         rho(r) = log cosh r
  sqrt_shift       rho(r) = sqrt(1+r^2) - 1
  power            rho(r) = r^p / p, exponent p in [1, 2] via "param"

set primitives (correlation scenarios)
  ball | e0_ball           {radius}
  slab | e0_slab           {coord, half_width}
  box | e0_box             {half_widths: [..]}
  ellipsoid | e0_ellipsoid {matrix: [[..]], radius}
  block_ball               {block, radius}
  radius_box               {bounds: [..]}
  ambient_ball             {radius}
  intersect | union        {of: [set, set, ...]}

outputs
  each run writes CSV artifacts plus report.json into <out-root>/<name>;
  the default out-root is $HEATFLOW_OUT_ROOT or ./heatflow-out
)";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heat-flow transport maps: batch experiment runner"};
    app.require_subcommand(1);

    std::vector<std::string> config_paths;
    std::string out_flag;
    bool parallel = false;
    std::int64_t seed_flag = -1;
    double tol_scale = 0.0;  // 0: keep per-config values

    auto* run = app.add_subcommand("run", "execute experiment configs");
    run->add_option("--config", config_paths, "config file (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--out", out_flag, "output root directory");
    run->add_option("--seed", seed_flag, "override the seed of every config")
        ->check(CLI::NonNegativeNumber);
    run->add_option("--tolerance-scale", tol_scale, "scale every pass threshold")
        ->check(CLI::PositiveNumber);
    run->add_flag("--parallel", parallel, "run configs concurrently in isolated directories");

    auto* acc = app.add_subcommand("acceptance", "run the full acceptance battery");
    double acc_scale = 1.0;
    std::string acc_out;
    acc->add_option("--out", acc_out, "output root directory");
    acc->add_option("--tolerance-scale", acc_scale, "scale every pass threshold")
        ->check(CLI::PositiveNumber);

    auto* list = app.add_subcommand("list-scenarios", "describe scenario kinds and primitives");

    auto* validate = app.add_subcommand("validate-config", "schema-check configs without running");
    std::vector<std::string> validate_paths;
    validate->add_option("--config", validate_paths, "config file (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitSchema;
    }

    if (list->parsed()) {
        print_scenarios();
        return kExitPass;
    }

    if (validate->parsed()) {
        int severity = kExitPass;
        for (const auto& path : validate_paths) {
            try {
                auto cfg = heatflow::cli::load_config_file(path);
                std::cout << path << ": valid (scenario " << heatflow::cli::kind_name(cfg.kind)
                          << ", name " << cfg.name << ")\n";
            } catch (const std::exception& e) {
                std::cerr << path << ": INVALID: " << e.what() << "\n";
                severity = kExitSchema;
            }
        }
        return severity;
    }

    if (acc->parsed()) {
        ExperimentConfig cfg;
        cfg.kind = heatflow::cli::ScenarioKind::acceptance_suite;
        cfg.name = "acceptance";
        cfg.tolerance_scale = acc_scale;
        try {
            auto plans = plan_runs({cfg}, acc_out);
            return run_all(plans, false);
        } catch (const std::exception& e) {
            std::cerr << "acceptance: " << e.what() << "\n";
            return severity_of(e);
        }
    }

    // run
    try {
        std::vector<ExperimentConfig> cfgs;
        for (const auto& path : config_paths) {
            auto cfg = heatflow::cli::load_config_file(path);
            if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
            if (tol_scale > 0.0) cfg.tolerance_scale = tol_scale;
            cfgs.push_back(std::move(cfg));
        }
        auto plans = plan_runs(std::move(cfgs), out_flag);
        return run_all(plans, parallel);
    } catch (const std::exception& e) {
        std::cerr << "run: " << e.what() << "\n";
        return severity_of(e);
    }
}
