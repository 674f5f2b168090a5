#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ispl {

// Raised when an operation's preconditions are violated (bad shapes, ranges,
// unknown enum values, malformed configs).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised on filesystem / codec failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when training goes off the rails (non-finite losses).
class TrainError : public std::runtime_error {
public:
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Declared interval for image data. Canonical range is [0,1].
struct ValueRange {
    double lo = 0.0;
    double hi = 1.0;

    double span() const { return hi - lo; }
    bool operator==(const ValueRange& o) const { return lo == o.lo && hi == o.hi; }
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

}  // namespace ispl
