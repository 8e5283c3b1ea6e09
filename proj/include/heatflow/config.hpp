#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "heatflow/common.hpp"
#include "heatflow/correlation.hpp"
#include "heatflow/gaussian.hpp"
#include "heatflow/potentials.hpp"
#include "heatflow/semigroup.hpp"

namespace heatflow::cli {

using nlohmann::json;

/// Experiment families the command-line runner can execute.
enum class ScenarioKind { semigroup, flow, brenier1d, gaussian, correlation, acceptance_suite };

inline const char* kind_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::semigroup: return "semigroup";
        case ScenarioKind::flow: return "flow";
        case ScenarioKind::brenier1d: return "brenier1d";
        case ScenarioKind::gaussian: return "gaussian";
        case ScenarioKind::correlation: return "correlation";
        case ScenarioKind::acceptance_suite: return "acceptance-suite";
    }
    return "?";
}

inline ScenarioKind kind_from_string(const std::string& s) {
    if (s == "semigroup") return ScenarioKind::semigroup;
    if (s == "flow") return ScenarioKind::flow;
    if (s == "brenier1d") return ScenarioKind::brenier1d;
    if (s == "gaussian") return ScenarioKind::gaussian;
    if (s == "correlation") return ScenarioKind::correlation;
    if (s == "acceptance-suite") return ScenarioKind::acceptance_suite;
    throw schema_error("unknown scenario kind: " + s);
}

/// Named entry of the radial profile catalog; param is the exponent for
/// "power" and ignored otherwise.
struct ProfileSpec {
    std::string name = "quadratic";
    double param = 0.0;
};

/// Scalar potential assembled from a profile: "radial" evaluates rho(|x|),
/// "product" sums rho(|x_i|) per coordinate. Identical in one dimension.
struct PotentialSpec {
    ProfileSpec profile;
    std::string form = "radial";
};

struct GridSpec {
    std::string kind = "line";  // line | box | radial
    double half_width = 8.0;    // line/box extent [-R, R] per axis
    double r_hi = 8.0;          // radial extent
    std::size_t nodes = 801;    // nodes per axis
    int ambient_dim = 3;        // radial reduction dimension
};

/// Seed points for trajectory ensembles: an explicit list wins; otherwise
/// `count` points are drawn uniformly from [lo, hi] with the run seed.
struct SeedsSpec {
    double lo = -2.5;
    double hi = 2.5;
    std::size_t count = 32;
    std::vector<double> values;
};

struct SemigroupSpec {
    PotentialSpec potential;
    std::optional<PotentialSpec> initial;  // absent: f0 = 1
    GridSpec grid;
    std::string bc = "reflecting";
    double dt = 1e-3;
    double horizon = 1.0;
    std::vector<double> snapshot_times;  // empty: geometric default schedule
    double cutoff_radius = 0.0;          // 0: grid half width
};

struct FlowSpec {
    PotentialSpec potential;
    std::optional<PotentialSpec> initial;  // absent: f0 = 1, the flow is trivial
    GridSpec grid;                         // line | radial
    double window_lo = -5.0;
    double window_hi = 5.0;
    double dt = 1e-3;
    double rk_dt = 1e-3;
    double horizon = 10.0;
    double stop_w_sup = 1e-4;
    SeedsSpec seeds;
};

struct Brenier1dSpec {
    int ambient_dim = 3;
    ProfileSpec rho;
    ProfileSpec v;
    double r_hi = 16.0;
    std::size_t mesh = 2001;
};

struct GaussianSpec {
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;
    double dt = 1e-3;
    double stop_norm = 1e-8;
};

struct CorrelationSpec {
    Eigen::MatrixXd quad;  // 0x0 when the Gaussian factor is absent
    std::vector<corr::RadialBlock> blocks;
    corr::SymmetricSet set_a;
    corr::SymmetricSet set_b;
    std::size_t samples = 1000000;
    bool ks_audit = false;
};

struct ExperimentConfig {
    ScenarioKind kind = ScenarioKind::semigroup;
    std::string name;  // directory-safe run label
    std::uint64_t seed = 1;
    std::string out_dir;  // empty: resolved by the runner
    double tolerance_scale = 1.0;
    std::optional<SemigroupSpec> semigroup;
    std::optional<FlowSpec> flow;
    std::optional<Brenier1dSpec> brenier1d;
    std::optional<GaussianSpec> gaussian;
    std::optional<CorrelationSpec> correlation;
};

namespace detail {

inline const json& expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw schema_error(where + ": expected an object");
    return j;
}

/// Rejects unknown keys so typos fail loudly instead of silently defaulting.
inline void expect_keys(const json& j, const std::string& where,
                        std::initializer_list<const char*> allowed) {
    expect_object(j, where);
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw schema_error(where + ": unknown key \"" + item.key() + "\"");
    }
}

inline const json* find(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

inline const json& require(const json& j, const char* key, const std::string& where) {
    const json* p = find(j, key);
    if (!p) throw schema_error(where + ": missing required key \"" + key + "\"");
    return *p;
}

inline double get_number(const json& j, const std::string& where) {
    if (!j.is_number()) throw schema_error(where + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw schema_error(where + ": number must be finite");
    return v;
}

inline double get_positive(const json& j, const std::string& where) {
    const double v = get_number(j, where);
    if (!(v > 0.0)) throw schema_error(where + ": must be > 0");
    return v;
}

inline std::size_t get_count(const json& j, const std::string& where) {
    if (!j.is_number_integer() || j.get<long long>() < 0)
        throw schema_error(where + ": expected a nonnegative integer");
    return static_cast<std::size_t>(j.get<long long>());
}

inline std::string get_string(const json& j, const std::string& where) {
    if (!j.is_string()) throw schema_error(where + ": expected a string");
    return j.get<std::string>();
}

inline bool get_bool(const json& j, const std::string& where) {
    if (!j.is_boolean()) throw schema_error(where + ": expected a boolean");
    return j.get<bool>();
}

inline Eigen::MatrixXd get_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw schema_error(where + ": expected a nonempty array of rows");
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].empty())
            throw schema_error(where + ": row " + std::to_string(r) + " must be a nonempty array");
        if (r == 0)
            cols = j[r].size();
        else if (j[r].size() != cols)
            throw schema_error(where + ": rows have unequal lengths");
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                get_number(j[r][c], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    return m;
}

inline std::vector<double> get_number_list(const json& j, const std::string& where) {
    if (!j.is_array()) throw schema_error(where + ": expected an array of numbers");
    std::vector<double> v;
    v.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        v.push_back(get_number(j[i], where + "[" + std::to_string(i) + "]"));
    return v;
}

}  // namespace detail

/// Materializes a catalog profile; schema errors carry the config path.
inline RadialProfile build_profile(const ProfileSpec& p, const std::string& where = "profile") {
    try {
        return RadialProfile::by_name(p.name, p.param);
    } catch (const std::exception& e) {
        throw schema_error(where + ": " + e.what());
    }
}

inline ProfileSpec parse_profile(const json& j, const std::string& where) {
    detail::expect_keys(j, where, {"name", "param"});
    ProfileSpec p;
    p.name = detail::get_string(detail::require(j, "name", where), where + ".name");
    if (const json* q = detail::find(j, "param")) p.param = detail::get_number(*q, where + ".param");
    if (p.name == "power" && !detail::find(j, "param"))
        throw schema_error(where + ": profile \"power\" requires \"param\"");
    build_profile(p, where);  // validates the name and the power exponent
    return p;
}

inline PotentialSpec parse_potential(const json& j, const std::string& where) {
    detail::expect_keys(j, where, {"profile", "form"});
    PotentialSpec p;
    p.profile = parse_profile(detail::require(j, "profile", where), where + ".profile");
    if (const json* f = detail::find(j, "form")) {
        p.form = detail::get_string(*f, where + ".form");
        if (p.form != "radial" && p.form != "product")
            throw schema_error(where + ".form: expected \"radial\" or \"product\"");
    }
    return p;
}

/// One-dimensional evaluation: both forms reduce to rho(|x|).
inline std::function<double(double)> potential_fn_1d(const PotentialSpec& spec) {
    auto prof = build_profile(spec.profile);
    return [prof](double x) { return prof.rho(std::fabs(x)); };
}

inline std::function<double(double, double)> potential_fn_2d(const PotentialSpec& spec) {
    auto prof = build_profile(spec.profile);
    if (spec.form == "product")
        return [prof](double x, double y) { return prof.rho(std::fabs(x)) + prof.rho(std::fabs(y)); };
    return [prof](double x, double y) { return prof.rho(std::hypot(x, y)); };
}

inline GridSpec parse_grid(const json& j, const std::string& where, bool allow_box,
                           bool allow_radial) {
    detail::expect_keys(j, where, {"kind", "half_width", "r_hi", "nodes", "ambient_dim"});
    GridSpec g;
    if (const json* k = detail::find(j, "kind")) g.kind = detail::get_string(*k, where + ".kind");
    if (g.kind != "line" && g.kind != "box" && g.kind != "radial")
        throw schema_error(where + ".kind: expected \"line\", \"box\" or \"radial\"");
    if (g.kind == "box" && !allow_box)
        throw schema_error(where + ".kind: \"box\" is not supported by this scenario");
    if (g.kind == "radial" && !allow_radial)
        throw schema_error(where + ".kind: \"radial\" is not supported by this scenario");
    if (const json* n = detail::find(j, "nodes"))
        g.nodes = detail::get_count(*n, where + ".nodes");
    if (g.nodes < 16) throw schema_error(where + ".nodes: need at least 16 nodes per axis");
    if (g.kind == "radial") {
        if (const json* r = detail::find(j, "r_hi"))
            g.r_hi = detail::get_positive(*r, where + ".r_hi");
        if (g.r_hi > 60.0)
            throw schema_error(where + ".r_hi: beyond the profile catalog domain (max 60)");
        if (const json* a = detail::find(j, "ambient_dim")) {
            if (!a->is_number_integer() || a->get<long long>() < 1)
                throw schema_error(where + ".ambient_dim: expected an integer >= 1");
            g.ambient_dim = static_cast<int>(a->get<long long>());
        }
        if (detail::find(j, "half_width"))
            throw schema_error(where + ".half_width: radial grids take \"r_hi\" instead");
    } else {
        if (const json* w = detail::find(j, "half_width"))
            g.half_width = detail::get_positive(*w, where + ".half_width");
        const double cap = g.kind == "box" ? 42.0 : 60.0;
        if (g.half_width > cap)
            throw schema_error(where + ".half_width: beyond the profile catalog domain (max " +
                               std::to_string(static_cast<int>(cap)) + ")");
        if (detail::find(j, "r_hi"))
            throw schema_error(where + ".r_hi: cartesian grids take \"half_width\" instead");
        if (detail::find(j, "ambient_dim"))
            throw schema_error(where + ".ambient_dim: only radial grids take an ambient dimension");
    }
    return g;
}

inline pde::Grid build_grid(const GridSpec& g) {
    if (g.kind == "line") return pde::Grid::line(-g.half_width, g.half_width, g.nodes);
    if (g.kind == "box")
        return pde::Grid::box(-g.half_width, g.half_width, g.nodes, -g.half_width, g.half_width,
                              g.nodes);
    return pde::Grid::radial_line(g.r_hi, g.nodes, g.ambient_dim);
}

inline SeedsSpec parse_seeds(const json& j, const std::string& where) {
    detail::expect_keys(j, where, {"lo", "hi", "count", "values"});
    SeedsSpec s;
    if (const json* v = detail::find(j, "values")) {
        s.values = detail::get_number_list(*v, where + ".values");
        if (s.values.size() < 2) throw schema_error(where + ".values: need at least 2 seeds");
        if (detail::find(j, "lo") || detail::find(j, "hi") || detail::find(j, "count"))
            throw schema_error(where + ": \"values\" excludes \"lo\"/\"hi\"/\"count\"");
        return s;
    }
    if (const json* v = detail::find(j, "lo")) s.lo = detail::get_number(*v, where + ".lo");
    if (const json* v = detail::find(j, "hi")) s.hi = detail::get_number(*v, where + ".hi");
    if (const json* v = detail::find(j, "count")) s.count = detail::get_count(*v, where + ".count");
    if (!(s.hi > s.lo)) throw schema_error(where + ": need hi > lo");
    if (s.count < 2) throw schema_error(where + ".count: need at least 2 seeds");
    return s;
}

inline SemigroupSpec parse_semigroup(const json& j, const std::string& where) {
    detail::expect_keys(j, where,
                        {"potential", "initial", "grid", "bc", "dt", "horizon", "snapshot_times",
                         "cutoff_radius"});
    SemigroupSpec s;
    s.potential = parse_potential(detail::require(j, "potential", where), where + ".potential");
    if (const json* i = detail::find(j, "initial"))
        s.initial = parse_potential(*i, where + ".initial");
    if (const json* g = detail::find(j, "grid"))
        s.grid = parse_grid(*g, where + ".grid", /*allow_box=*/true, /*allow_radial=*/true);
    if (const json* b = detail::find(j, "bc")) {
        s.bc = detail::get_string(*b, where + ".bc");
        if (s.bc != "reflecting" && s.bc != "dirichlet_cutoff")
            throw schema_error(where + ".bc: expected \"reflecting\" or \"dirichlet_cutoff\"");
    }
    if (s.bc == "dirichlet_cutoff" && s.grid.kind == "radial")
        throw schema_error(where +
                           ": dirichlet_cutoff on a radial grid pins the inner node and acts as an "
                           "absorber at the origin; use a cartesian grid or reflecting bc");
    if (s.grid.kind == "radial" && s.potential.form == "product")
        throw schema_error(where + ".potential.form: radial grids need form \"radial\"");
    if (s.grid.kind == "radial" && s.initial && s.initial->form == "product")
        throw schema_error(where + ".initial.form: radial grids need form \"radial\"");
    if (const json* d = detail::find(j, "dt")) s.dt = detail::get_positive(*d, where + ".dt");
    if (const json* h = detail::find(j, "horizon"))
        s.horizon = detail::get_positive(*h, where + ".horizon");
    if (!(s.horizon >= s.dt)) throw schema_error(where + ".horizon: must be >= dt");
    if (const json* t = detail::find(j, "snapshot_times")) {
        s.snapshot_times = detail::get_number_list(*t, where + ".snapshot_times");
        double prev = 0.0;
        for (double x : s.snapshot_times) {
            if (!(x > prev))
                throw schema_error(where + ".snapshot_times: must be strictly increasing and > 0");
            prev = x;
        }
        if (!s.snapshot_times.empty() && s.snapshot_times.back() > s.horizon + 1e-12)
            throw schema_error(where + ".snapshot_times: beyond the horizon");
    }
    if (const json* c = detail::find(j, "cutoff_radius")) {
        if (s.bc != "dirichlet_cutoff")
            throw schema_error(where + ".cutoff_radius: only meaningful with bc dirichlet_cutoff");
        s.cutoff_radius = detail::get_positive(*c, where + ".cutoff_radius");
        if (s.cutoff_radius > s.grid.half_width)
            throw schema_error(where + ".cutoff_radius: beyond the grid half width");
    }
    return s;
}

inline FlowSpec parse_flow(const json& j, const std::string& where) {
    detail::expect_keys(j, where,
                        {"potential", "initial", "grid", "window", "dt", "rk_dt", "horizon",
                         "stop_w_sup", "seeds"});
    FlowSpec f;
    f.potential = parse_potential(detail::require(j, "potential", where), where + ".potential");
    if (const json* i = detail::find(j, "initial"))
        f.initial = parse_potential(*i, where + ".initial");
    if (const json* g = detail::find(j, "grid"))
        f.grid = parse_grid(*g, where + ".grid", /*allow_box=*/false, /*allow_radial=*/true);
    if (f.grid.kind == "radial" && f.potential.form == "product")
        throw schema_error(where + ".potential.form: radial grids need form \"radial\"");
    if (f.grid.kind == "radial" && f.initial && f.initial->form == "product")
        throw schema_error(where + ".initial.form: radial grids need form \"radial\"");
    if (const json* w = detail::find(j, "window")) {
        if (!w->is_array() || w->size() != 2)
            throw schema_error(where + ".window: expected [lo, hi]");
        f.window_lo = detail::get_number((*w)[0], where + ".window[0]");
        f.window_hi = detail::get_number((*w)[1], where + ".window[1]");
    } else if (f.grid.kind == "radial") {
        f.window_lo = f.grid.r_hi * 2e-3;
        f.window_hi = f.grid.r_hi * 0.75;
    } else {
        f.window_lo = -0.75 * f.grid.half_width;
        f.window_hi = 0.75 * f.grid.half_width;
    }
    if (!(f.window_hi > f.window_lo)) throw schema_error(where + ".window: need hi > lo");
    if (f.grid.kind == "radial" && !(f.window_lo > 0.0))
        throw schema_error(where + ".window: radial windows need lo > 0");
    const double glo = f.grid.kind == "radial" ? 0.0 : -f.grid.half_width;
    const double ghi = f.grid.kind == "radial" ? f.grid.r_hi : f.grid.half_width;
    if (f.window_lo < glo || f.window_hi > ghi)
        throw schema_error(where + ".window: outside the grid domain");
    if (const json* d = detail::find(j, "dt")) f.dt = detail::get_positive(*d, where + ".dt");
    if (const json* d = detail::find(j, "rk_dt"))
        f.rk_dt = detail::get_positive(*d, where + ".rk_dt");
    if (const json* h = detail::find(j, "horizon"))
        f.horizon = detail::get_positive(*h, where + ".horizon");
    if (!(f.horizon >= f.dt)) throw schema_error(where + ".horizon: must be >= dt");
    if (const json* s = detail::find(j, "stop_w_sup"))
        f.stop_w_sup = detail::get_positive(*s, where + ".stop_w_sup");
    if (const json* s = detail::find(j, "seeds")) f.seeds = parse_seeds(*s, where + ".seeds");
    if (f.seeds.values.empty()) {
        if (f.grid.kind == "radial" && !(f.seeds.lo > 0.0)) {
            f.seeds.lo = f.window_lo + 0.05 * (f.window_hi - f.window_lo);
            f.seeds.hi = f.window_lo + 0.60 * (f.window_hi - f.window_lo);
        }
        if (f.seeds.lo < f.window_lo || f.seeds.hi > f.window_hi)
            throw schema_error(where + ".seeds: range outside the window");
    } else {
        for (double v : f.seeds.values)
            if (v < f.window_lo || v > f.window_hi)
                throw schema_error(where + ".seeds.values: seed outside the window");
    }
    return f;
}

inline Brenier1dSpec parse_brenier1d(const json& j, const std::string& where) {
    detail::expect_keys(j, where, {"ambient_dim", "rho", "v", "r_hi", "mesh"});
    Brenier1dSpec b;
    if (const json* a = detail::find(j, "ambient_dim")) {
        if (!a->is_number_integer() || a->get<long long>() < 1)
            throw schema_error(where + ".ambient_dim: expected an integer >= 1");
        b.ambient_dim = static_cast<int>(a->get<long long>());
    }
    b.rho = parse_profile(detail::require(j, "rho", where), where + ".rho");
    b.v = parse_profile(detail::require(j, "v", where), where + ".v");
    if (const json* r = detail::find(j, "r_hi"))
        b.r_hi = detail::get_positive(*r, where + ".r_hi");
    if (b.r_hi > 60.0)
        throw schema_error(where + ".r_hi: beyond the profile catalog domain (max 60)");
    if (const json* m = detail::find(j, "mesh")) {
        b.mesh = detail::get_count(*m, where + ".mesh");
        if (b.mesh < 5) throw schema_error(where + ".mesh: need at least 5 samples");
    }
    auto vp = build_profile(b.v, where + ".v");
    for (int k = 0; k <= 512; ++k) {
        const double r = b.r_hi * (k + 1) / 513.0;
        if (vp.drho(r) < -1e-12)
            throw schema_error(where + ".v: profile must be non-decreasing on (0, r_hi]");
    }
    return b;
}

inline GaussianSpec parse_gaussian(const json& j, const std::string& where) {
    detail::expect_keys(j, where, {"a", "b", "dt", "stop_norm"});
    GaussianSpec g;
    g.a = detail::get_matrix(detail::require(j, "a", where), where + ".a");
    g.b = detail::get_matrix(detail::require(j, "b", where), where + ".b");
    if (const json* d = detail::find(j, "dt")) g.dt = detail::get_positive(*d, where + ".dt");
    if (g.dt > 1e-2) throw schema_error(where + ".dt: must be <= 0.01 for the matrix flow");
    if (const json* s = detail::find(j, "stop_norm"))
        g.stop_norm = detail::get_positive(*s, where + ".stop_norm");
    try {
        gauss::GaussianPair probe(g.a, g.b);
    } catch (const std::exception& e) {
        throw schema_error(where + ": " + e.what());
    }
    return g;
}

inline corr::SymmetricSet parse_set(const json& j, const std::string& where) {
    using Set = corr::SymmetricSet;
    detail::expect_keys(j, where,
                        {"kind", "radius", "coord", "half_width", "half_widths", "matrix", "block",
                         "bounds", "of"});
    std::string kind = detail::get_string(detail::require(j, "kind", where), where + ".kind");
    auto only = [&](std::initializer_list<const char*> keys) {
        detail::expect_keys(j, where + " (" + kind + ")", keys);
    };
    if (kind == "ball" || kind == "e0_ball") {
        only({"kind", "radius"});
        return Set::e0_ball(
            detail::get_positive(detail::require(j, "radius", where), where + ".radius"));
    }
    if (kind == "slab" || kind == "e0_slab") {
        only({"kind", "coord", "half_width"});
        int coord = 0;
        if (const json* c = detail::find(j, "coord")) {
            if (!c->is_number_integer() || c->get<long long>() < 0)
                throw schema_error(where + ".coord: expected an integer >= 0");
            coord = static_cast<int>(c->get<long long>());
        }
        return Set::e0_slab(coord, detail::get_positive(detail::require(j, "half_width", where),
                                                        where + ".half_width"));
    }
    if (kind == "box" || kind == "e0_box") {
        only({"kind", "half_widths"});
        auto hw = detail::get_number_list(detail::require(j, "half_widths", where),
                                          where + ".half_widths");
        if (hw.empty()) throw schema_error(where + ".half_widths: need at least one entry");
        for (double w : hw)
            if (!(w > 0.0)) throw schema_error(where + ".half_widths: entries must be > 0");
        return Set::e0_box(Eigen::Map<Eigen::VectorXd>(hw.data(), static_cast<Eigen::Index>(hw.size())));
    }
    if (kind == "ellipsoid" || kind == "e0_ellipsoid") {
        only({"kind", "matrix", "radius"});
        Eigen::MatrixXd e = detail::get_matrix(detail::require(j, "matrix", where), where + ".matrix");
        if (e.rows() != e.cols()) throw schema_error(where + ".matrix: must be square");
        if ((e - e.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw schema_error(where + ".matrix: must be symmetric");
        if (Eigen::LLT<Eigen::MatrixXd>(e).info() != Eigen::Success)
            throw schema_error(where + ".matrix: must be positive definite");
        return Set::e0_ellipsoid(
            e, detail::get_positive(detail::require(j, "radius", where), where + ".radius"));
    }
    if (kind == "block_ball") {
        only({"kind", "block", "radius"});
        std::size_t block =
            detail::get_count(detail::require(j, "block", where), where + ".block");
        return Set::block_ball(
            block, detail::get_positive(detail::require(j, "radius", where), where + ".radius"));
    }
    if (kind == "radius_box") {
        only({"kind", "bounds"});
        auto b = detail::get_number_list(detail::require(j, "bounds", where), where + ".bounds");
        if (b.empty()) throw schema_error(where + ".bounds: need at least one entry");
        for (double w : b)
            if (!(w > 0.0)) throw schema_error(where + ".bounds: entries must be > 0");
        return Set::radius_box(b);
    }
    if (kind == "ambient_ball") {
        only({"kind", "radius"});
        return Set::ambient_ball(
            detail::get_positive(detail::require(j, "radius", where), where + ".radius"));
    }
    if (kind == "intersect" || kind == "union") {
        only({"kind", "of"});
        const json& of = detail::require(j, "of", where);
        if (!of.is_array() || of.size() < 2)
            throw schema_error(where + ".of: expected an array of at least 2 sets");
        Set acc = parse_set(of[0], where + ".of[0]");
        for (std::size_t i = 1; i < of.size(); ++i) {
            Set next = parse_set(of[i], where + ".of[" + std::to_string(i) + "]");
            acc = kind == "intersect" ? Set::intersect(acc, next) : Set::unite(acc, next);
        }
        return acc;
    }
    throw schema_error(where + ".kind: unknown set kind \"" + kind + "\"");
}

inline CorrelationSpec parse_correlation(const json& j, const std::string& where) {
    detail::expect_keys(j, where, {"sampler", "sets", "samples", "ks_audit"});
    CorrelationSpec c;
    const json& sampler = detail::require(j, "sampler", where);
    detail::expect_keys(sampler, where + ".sampler", {"quad", "blocks"});
    c.quad.resize(0, 0);
    if (const json* q = detail::find(sampler, "quad"))
        c.quad = detail::get_matrix(*q, where + ".sampler.quad");
    if (const json* bl = detail::find(sampler, "blocks")) {
        if (!bl->is_array()) throw schema_error(where + ".sampler.blocks: expected an array");
        for (std::size_t i = 0; i < bl->size(); ++i) {
            const std::string bw = where + ".sampler.blocks[" + std::to_string(i) + "]";
            detail::expect_keys((*bl)[i], bw, {"dim", "profile", "r_cut"});
            const json& dj = detail::require((*bl)[i], "dim", bw);
            if (!dj.is_number_integer() || dj.get<long long>() < 1)
                throw schema_error(bw + ".dim: expected an integer >= 1");
            ProfileSpec ps = parse_profile(detail::require((*bl)[i], "profile", bw), bw + ".profile");
            double r_cut = 0.0;
            if (const json* rc = detail::find((*bl)[i], "r_cut"))
                r_cut = detail::get_positive(*rc, bw + ".r_cut");
            c.blocks.push_back(
                {static_cast<int>(dj.get<long long>()), build_profile(ps, bw + ".profile"), r_cut});
        }
    }
    if (c.quad.size() == 0 && c.blocks.empty())
        throw schema_error(where + ".sampler: need a Gaussian factor or at least one block");
    const json& sets = detail::require(j, "sets", where);
    detail::expect_keys(sets, where + ".sets", {"a", "b"});
    c.set_a = parse_set(detail::require(sets, "a", where + ".sets"), where + ".sets.a");
    c.set_b = parse_set(detail::require(sets, "b", where + ".sets"), where + ".sets.b");
    if (const json* n = detail::find(j, "samples")) {
        c.samples = detail::get_count(*n, where + ".samples");
        if (c.samples < 10000) throw schema_error(where + ".samples: need at least 10000");
    }
    if (const json* k = detail::find(j, "ks_audit"))
        c.ks_audit = detail::get_bool(*k, where + ".ks_audit");
    try {
        corr::ProductSampler probe(c.quad, c.blocks, 1024);
    } catch (const std::exception& e) {
        throw schema_error(where + ".sampler: " + e.what());
    }
    return c;
}

/// Parses and validates a full experiment configuration. Every violation of
/// the documented schema throws schema_error naming the offending key; no
/// side effects occur, so a rejected config leaves no trace on disk.
inline ExperimentConfig parse_config(const json& j, const std::string& where = "config") {
    detail::expect_keys(j, where,
                        {"scenario", "name", "seed", "out", "tolerance_scale", "semigroup", "flow",
                         "brenier1d", "gaussian", "correlation", "acceptance"});
    ExperimentConfig cfg;
    cfg.kind = kind_from_string(
        detail::get_string(detail::require(j, "scenario", where), where + ".scenario"));
    const char* body_key =
        cfg.kind == ScenarioKind::acceptance_suite ? "acceptance" : kind_name(cfg.kind);
    for (const char* k : {"semigroup", "flow", "brenier1d", "gaussian", "correlation", "acceptance"})
        if (detail::find(j, k) && std::string(k) != body_key)
            throw schema_error(where + ": key \"" + k + "\" does not match scenario \"" +
                               kind_name(cfg.kind) + "\"");
    cfg.name = kind_name(cfg.kind);
    if (const json* n = detail::find(j, "name")) {
        cfg.name = detail::get_string(*n, where + ".name");
        if (cfg.name.empty()) throw schema_error(where + ".name: must be nonempty");
        for (char ch : cfg.name)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' ||
                  ch == '.'))
                throw schema_error(where + ".name: only [A-Za-z0-9._-] allowed");
    }
    if (const json* s = detail::find(j, "seed")) {
        if (!s->is_number_integer() || s->get<long long>() < 0)
            throw schema_error(where + ".seed: expected a nonnegative integer");
        cfg.seed = static_cast<std::uint64_t>(s->get<long long>());
    }
    if (const json* o = detail::find(j, "out"))
        cfg.out_dir = detail::get_string(*o, where + ".out");
    if (const json* t = detail::find(j, "tolerance_scale"))
        cfg.tolerance_scale = detail::get_positive(*t, where + ".tolerance_scale");

    switch (cfg.kind) {
        case ScenarioKind::semigroup:
            cfg.semigroup =
                parse_semigroup(detail::require(j, "semigroup", where), where + ".semigroup");
            break;
        case ScenarioKind::flow:
            cfg.flow = parse_flow(detail::require(j, "flow", where), where + ".flow");
            break;
        case ScenarioKind::brenier1d:
            cfg.brenier1d =
                parse_brenier1d(detail::require(j, "brenier1d", where), where + ".brenier1d");
            break;
        case ScenarioKind::gaussian:
            cfg.gaussian = parse_gaussian(detail::require(j, "gaussian", where), where + ".gaussian");
            break;
        case ScenarioKind::correlation:
            cfg.correlation = parse_correlation(detail::require(j, "correlation", where),
                                                where + ".correlation");
            break;
        case ScenarioKind::acceptance_suite:
            if (const json* a = detail::find(j, "acceptance"))
                detail::expect_keys(*a, where + ".acceptance", {});
            break;
    }
    return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw schema_error("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw schema_error(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j, path);
}

}  // namespace heatflow::cli
