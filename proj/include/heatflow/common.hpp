#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace heatflow {

/// Raised when a certified invariant fails at its pinned tolerance.
class invariant_error : public std::runtime_error {
public:
    explicit invariant_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised on malformed configuration input; no output files may exist afterwards.
class schema_error : public std::runtime_error {
public:
    explicit schema_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when an integrator detects instability and aborts the run.
class numerical_abort : public std::runtime_error {
public:
    explicit numerical_abort(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shortest round-trippable decimal form; keeps repeated runs byte-identical.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline constexpr double pi = 3.14159265358979323846;

inline double sq(double x) { return x * x; }

}  // namespace heatflow
