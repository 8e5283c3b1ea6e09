#include <catch_amalgamated.hpp>
#include <cmath>
#include <functional>
#include <vector>

#include "heatflow/brenier.hpp"
#include "heatflow/numerics.hpp"

using namespace heatflow;

namespace {

/// Independent oracle: 1e6-node trapezoid CDF with bisection on the linear
/// interpolant. Accuracy ~1e-10 on the laws used here.
struct TrapezoidOracle {
    std::vector<double> x, c;

    TrapezoidOracle(const std::function<double(double)>& logf, double a, double b,
                    std::size_t n = 1000001) {
        x.resize(n);
        c.resize(n);
        std::vector<double> f(n);
        double m = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
            f[i] = logf(x[i]);
            m = std::max(m, f[i]);
        }
        for (std::size_t i = 0; i < n; ++i) f[i] = std::exp(f[i] - m);
        c[0] = 0.0;
        for (std::size_t i = 1; i < n; ++i)
            c[i] = c[i - 1] + 0.5 * (x[i] - x[i - 1]) * (f[i] + f[i - 1]);
        for (std::size_t i = 0; i < n; ++i) c[i] /= c[n - 1];
    }

    double cdf(double q) const {
        auto it = std::upper_bound(x.begin(), x.end(), q);
        const std::size_t i = static_cast<std::size_t>(it - x.begin());
        if (i == 0) return 0.0;
        if (i >= x.size()) return 1.0;
        return c[i - 1] + (c[i] - c[i - 1]) * (q - x[i - 1]) / (x[i] - x[i - 1]);
    }

    double quantile(double u) const {
        std::size_t lo = 0, hi = x.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (c[mid] < u ? lo : hi) = mid;
        }
        return x[lo] + (x[hi] - x[lo]) * (u - c[lo]) / (c[hi] - c[lo]);
    }
};

Density1D std_gaussian(double lo = -10.0, double hi = 10.0) {
    return Density1D([](double r) { return -0.5 * r * r; }, lo, hi);
}

}  // namespace

TEST_CASE("density normalization, CDF and quantile round-trips", "[brenier]") {
    auto d = std_gaussian();
    REQUIRE(d.normalization_residual() < 1e-10);
    REQUIRE(d.cdf(0.0) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(d.cdf(1.0) == Catch::Approx(0.841344746068543).margin(1e-11));
    for (double u : {1e-6, 0.1, 0.5, 0.9, 0.999999})
        REQUIRE(d.cdf(d.quantile(u)) == Catch::Approx(u).margin(1e-11));
    double prev = -1.0;
    for (int i = 0; i <= 50; ++i) {
        const double v = d.cdf(-4.0 + 8.0 * i / 50.0);
        REQUIRE(v >= prev);
        prev = v;
    }
}

TEST_CASE("gaussian-to-gaussian quantile map is the exact scaling", "[brenier]") {
    auto src = std_gaussian();
    // Variance 1/2: quantile map is multiplication by 1/sqrt(2).
    Density1D tgt([](double r) { return -r * r; }, -10.0, 10.0);
    auto map = quantile_map(src, tgt, linspace(-3.0, 3.0, 601));
    REQUIRE(map(1.0) == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-9));
    for (double x : {-2.5, -1.0, 0.25, 2.0})
        REQUIRE(map(x) == Catch::Approx(x / std::sqrt(2.0)).margin(1e-9));
    REQUIRE(map.lipschitz_estimate() == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("half-line map matches the trapezoid oracle and frozen values", "[brenier]") {
    Density1D src([](double r) { return -0.5 * r * r; }, 0.0, 12.0);
    Density1D tgt([](double r) { return -0.5 * r * r - r; }, 0.0, 12.0);
    auto map = quantile_map(src, tgt, linspace(0.05, 4.0, 401));

    // Frozen oracle outputs (1e6-node trapezoid + bisection; cross-checked
    // against the closed form through the normal CDF).
    REQUIRE(map(0.5) == Catch::Approx(0.293597732194).margin(2e-9));
    REQUIRE(map(1.0) == Catch::Approx(0.641537167326).margin(2e-9));
    REQUIRE(map(2.0) == Catch::Approx(1.446184446560).margin(2e-9));

    TrapezoidOracle os([](double r) { return -0.5 * r * r; }, 0.0, 12.0);
    TrapezoidOracle ot([](double r) { return -0.5 * r * r - r; }, 0.0, 12.0);
    for (double x : {0.2, 0.7, 1.3, 2.6, 3.5})
        REQUIRE(map(x) == Catch::Approx(ot.quantile(os.cdf(x))).margin(5e-9));
}

TEST_CASE("radial transport contracts toward the origin", "[brenier]") {
    auto res = radial_brenier(3, RadialProfile::quadratic(), RadialProfile::power(1.0), 14.0, 1501);
    REQUIRE(res.max_ratio <= 1.0 + 1e-10);
    REQUIRE(res.lipschitz <= 1.0 + 1e-4);
    REQUIRE(res.identity_residual <= 1e-4);

    // Frozen oracle values for n = 3, rho = r^2/2, v = r.
    REQUIRE(res.map(0.5) == Catch::Approx(0.337009202881).margin(2e-8));
    REQUIRE(res.map(1.0) == Catch::Approx(0.711855597474).margin(2e-8));
    REQUIRE(res.map(3.0) == Catch::Approx(2.428071226250).margin(2e-8));

    const double ratio = coordinate_monotonicity_check(res.map, linspace(0.1, 3.5, 200));
    REQUIRE(ratio <= 1.0 + 1e-10);
}

TEST_CASE("log-derivative identity certifies the 1D Monge-Ampere relation", "[brenier]") {
    // rho = x^2/2 on the line, v = x^2/2: T(x) = x/sqrt(2) analytically.
    auto src = std_gaussian();
    Density1D tgt([](double r) { return -r * r; }, -10.0, 10.0);
    auto map = quantile_map(src, tgt, linspace(-3.0, 3.0, 801));
    auto rep = verify_logderiv_identity(
        map, [](double x) { return 0.5 * x * x; }, [](double x) { return 0.5 * x * x; });
    REQUIRE(rep.max_residual < 1e-6);
    REQUIRE(rep.constant == Catch::Approx(-0.5 * std::log(2.0)).margin(1e-8));
}

TEST_CASE("wasserstein distance reproduces closed forms", "[brenier]") {
    auto src = std_gaussian();
    Density1D half([](double r) { return -r * r; }, -10.0, 10.0);
    const double w = wasserstein2_1d(src, half);
    REQUIRE(w == Catch::Approx(sq(1.0 - 1.0 / std::sqrt(2.0))).margin(1e-6));

    Density1D shifted([](double r) { return -0.5 * sq(r - 0.7); }, -10.0, 10.0);
    REQUIRE(wasserstein2_1d(src, shifted) == Catch::Approx(0.49).margin(1e-7));
}

TEST_CASE("brenier error paths", "[brenier]") {
    auto src = std_gaussian();
    Density1D tgt([](double r) { return -r * r; }, -10.0, 10.0);
    REQUIRE_THROWS_AS(quantile_map(src, tgt, linspace(-11.0, 0.0, 12)), std::domain_error);
    REQUIRE_THROWS_AS(MonotoneMap1D(linspace(0.0, 1.0, 6), {0.0, 0.1, 0.05, 0.2, 0.3, 0.4}),
                      invariant_error);

    RadialProfile decreasing(
        "decreasing", [](double r) { return -r; }, [](double) { return -1.0; },
        [](double) { return 0.0; }, [](double) { return 0.0; }, 20.0, false);
    REQUIRE_THROWS_AS(radial_brenier(3, RadialProfile::quadratic(), decreasing, 14.0),
                      invariant_error);
}
