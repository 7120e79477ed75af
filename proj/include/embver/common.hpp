#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace embver {

using NodeId = std::uint32_t;

// Error taxonomy. Callers distinguish configuration problems (ValidationError
// and subclasses) from runtime failures (NumericError, StateError).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data or configuration.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Malformed file content; message names the offending line where known.
class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& msg) : ValidationError(msg) {}
};

// Tensor/vector dimension mismatch.
class ShapeError : public ValidationError {
public:
    explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

// Index or version outside its valid range.
class RangeError : public ValidationError {
public:
    explicit RangeError(const std::string& msg) : ValidationError(msg) {}
};

// A prerequisite artifact is missing (e.g. an unregistered transform link).
class StateError : public Error {
public:
    explicit StateError(const std::string& msg) : Error(msg) {}
};

// Unknown node or key.
class LookupError : public Error {
public:
    explicit LookupError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf encountered, or an arithmetic precondition violated.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// A metric is undefined on the given inputs (e.g. single-class ROC-AUC).
class DegenerateMetricError : public Error {
public:
    explicit DegenerateMetricError(const std::string& msg) : Error(msg) {}
};

// Deterministic PRNG with hand-rolled distributions so results do not depend
// on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [0, n); n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);
    // Standard normal via Box-Muller.
    double normal();

    // Derive an independent stream; does not advance this generator.
    Rng fork(std::uint64_t stream) const;

    // Stateless mixing of seed material into a fresh 64-bit seed.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

private:
    std::uint64_t state_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace embver
