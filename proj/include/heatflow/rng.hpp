#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "heatflow/common.hpp"

namespace heatflow {

/// splitmix64; used to derive independent sub-stream seeds from (seed, id).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// mt19937_64 with explicit uniform/normal transforms. The standard pins the
/// engine's output sequence, so identical seeds give identical draws on every
/// platform; std::normal_distribution would not.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : eng_(mix_seed(seed, stream)) {}

    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * pi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * pi * u2);
    }

    /// Uniform point on the unit sphere in R^dim.
    std::vector<double> sphere_direction(int dim) {
        std::vector<double> v(static_cast<std::size_t>(dim));
        double n2 = 0.0;
        do {
            n2 = 0.0;
            for (auto& c : v) {
                c = normal();
                n2 += c * c;
            }
        } while (n2 < 1e-24);
        const double inv = 1.0 / std::sqrt(n2);
        for (auto& c : v) c *= inv;
        return v;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace heatflow
