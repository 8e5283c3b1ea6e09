#include <catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "heatflow/common.hpp"
#include "heatflow/interpolate.hpp"
#include "heatflow/numerics.hpp"
#include "heatflow/rng.hpp"

using namespace heatflow;

TEST_CASE("tridiagonal solver matches direct elimination", "[numerics]") {
    Rng rng(7);
    const std::size_t n = 40;
    std::vector<double> lo(n), di(n), up(n), rhs(n), x;
    for (std::size_t i = 0; i < n; ++i) {
        lo[i] = rng.uniform(-1.0, 1.0);
        up[i] = rng.uniform(-1.0, 1.0);
        di[i] = 3.0 + rng.uniform01();  // strict diagonal dominance
        rhs[i] = rng.uniform(-2.0, 2.0);
    }
    TridiagonalSolver solver;
    solver.solve(lo, di, up, rhs, x);
    for (std::size_t i = 0; i < n; ++i) {
        double r = di[i] * x[i] - rhs[i];
        if (i > 0) r += lo[i] * x[i - 1];
        if (i + 1 < n) r += up[i] * x[i + 1];
        REQUIRE(std::fabs(r) < 1e-12);
    }
}

TEST_CASE("adaptive Simpson hits tight tolerances", "[numerics]") {
    const double cubic = adaptive_simpson([](double x) { return x * x * x; }, 0.0, 1.0, 1e-14);
    REQUIRE(std::fabs(cubic - 0.25) < 1e-14);

    const double gauss =
        adaptive_simpson([](double x) { return std::exp(-0.5 * x * x); }, -8.0, 8.0, 1e-13);
    REQUIRE(std::fabs(gauss - std::sqrt(2.0 * pi)) < 1e-11);
}

TEST_CASE("bracketed Newton converges with poor derivatives", "[numerics]") {
    auto f = [](double x) { return std::cos(x) - x; };
    auto df = [](double x) { return -std::sin(x) - 1.0; };
    const double root = bracketed_newton(f, df, 0.0, 1.0, 1e-15, 1e-15);
    REQUIRE(std::fabs(f(root)) < 1e-14);

    // Deliberately wrong derivative: bisection fallback must still converge.
    const double root2 = bracketed_newton(f, [](double) { return 1e9; }, 0.0, 1.0, 1e-13, 1e-13);
    REQUIRE(std::fabs(f(root2)) < 1e-12);
}

TEST_CASE("monotone cubic preserves monotonicity and linearity", "[interpolate]") {
    std::vector<double> x = {0.0, 0.4, 1.0, 1.5, 3.0, 4.0};
    std::vector<double> y = {0.0, 0.1, 0.2, 1.4, 1.5, 5.0};
    MonotoneCubic m(x, y);
    double prev = m(0.0);
    for (int i = 1; i <= 400; ++i) {
        const double v = m(4.0 * i / 400.0);
        REQUIRE(v >= prev - 1e-12);
        prev = v;
    }
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(m(x[i]) == Catch::Approx(y[i]).margin(1e-14));

    MonotoneCubic lin({0.0, 1.0, 2.0, 3.5}, {1.0, 3.0, 5.0, 8.0});
    REQUIRE(lin(1.7) == Catch::Approx(1.0 + 2.0 * 1.7).margin(1e-13));
    REQUIRE(lin.derivative(2.4) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("uniform cubic interpolation is third-order accurate", "[interpolate]") {
    auto fn = [](double x) { return std::sin(1.3 * x) + 0.2 * x; };
    auto build = [&](double h) {
        const double a = -2.0;
        std::size_t n = static_cast<std::size_t>(std::round(4.0 / h)) + 1;
        std::vector<double> f(n);
        for (std::size_t i = 0; i < n; ++i) f[i] = fn(a + h * static_cast<double>(i));
        return UniformCubic1D(a, h, std::move(f));
    };
    auto max_err = [&](const UniformCubic1D& itp) {
        double e = 0.0;
        for (int i = 0; i <= 1000; ++i) {
            const double x = -1.5 + 3.0 * i / 1000.0;
            e = std::max(e, std::fabs(itp(x) - fn(x)));
        }
        return e;
    };
    const double e1 = max_err(build(0.05)), e2 = max_err(build(0.025));
    REQUIRE(e1 / e2 > 6.0);  // at least O(h^3)

    // Quadratics are reproduced exactly.
    std::vector<double> q(31);
    for (int i = 0; i < 31; ++i) {
        const double x = 0.1 * i;
        q[static_cast<std::size_t>(i)] = 2.0 - x + 0.7 * x * x;
    }
    UniformCubic1D qi(0.0, 0.1, q);
    REQUIRE(qi(1.234) == Catch::Approx(2.0 - 1.234 + 0.7 * 1.234 * 1.234).margin(1e-12));
}

TEST_CASE("bicubic matches smooth 2D fields", "[interpolate]") {
    auto fn = [](double x, double y) { return std::exp(-0.3 * x * x - 0.2 * y * y + 0.1 * x * y); };
    const double h = 0.05;
    const std::size_t n = 81;
    std::vector<double> f(n * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
            f[j * n + i] = fn(-2.0 + h * static_cast<double>(i), -2.0 + h * static_cast<double>(j));
    UniformCubic2D itp(-2.0, -2.0, h, h, n, n, std::move(f));
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const double x = rng.uniform(-1.8, 1.8), y = rng.uniform(-1.8, 1.8);
        REQUIRE(itp(x, y) == Catch::Approx(fn(x, y)).margin(2e-6));
    }
}

TEST_CASE("rng streams are deterministic and well scaled", "[rng]") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 64; ++i) {
        const double va = a.uniform01();
        REQUIRE(va == b.uniform01());
        REQUIRE(va >= 0.0);
        REQUIRE(va < 1.0);
        if (va != c.uniform01()) differs = true;
    }
    REQUIRE(differs);

    Rng r(5);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sumsq += z * z;
    }
    REQUIRE(std::fabs(sum / n) < 0.01);
    REQUIRE(sumsq / n == Catch::Approx(1.0).epsilon(0.02));

    auto dir = r.sphere_direction(5);
    double n2 = 0.0;
    for (double v : dir) n2 += v * v;
    REQUIRE(n2 == Catch::Approx(1.0).margin(1e-12));
}
