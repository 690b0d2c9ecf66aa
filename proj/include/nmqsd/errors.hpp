#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nmqsd {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Input problems: bad parameters, unsupported sizes, malformed states/configs.
// The CLI maps these to exit code 2.

class InputError : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public InputError {
public:
    using InputError::InputError;
};

class UnsupportedSize : public InputError {
public:
    using InputError::InputError;
};

class InvalidModel : public InputError {
public:
    using InputError::InputError;
};

class InvalidCorrelation : public InputError {
public:
    using InputError::InputError;
};

class InvalidState : public InputError {
public:
    using InputError::InputError;
};

class ConfigError : public InputError {
public:
    ConfigError(const std::string& what, int line = 0)
        : InputError(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

// ----------------------------------------------------------------------------
// Numerical failures. The CLI maps these to exit code 3.

class NumericalError : public Error {
public:
    using Error::Error;
};

class BasisMismatch : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ClosureDiverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class BasisIncomplete : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class KernelBlowup : public NumericalError {
public:
    KernelBlowup(double t, const std::string& detail)
        : NumericalError("kernel blow-up at t=" + std::to_string(t) + ": " + detail), t_(t) {}
    double time() const noexcept { return t_; }

private:
    double t_;
};

class ResourceError : public NumericalError {
public:
    ResourceError(const std::string& what, std::size_t estimate_bytes)
        : NumericalError(what + " (estimated " + std::to_string(estimate_bytes) + " bytes)"),
          estimate_(estimate_bytes) {}
    std::size_t estimate_bytes() const noexcept { return estimate_; }

private:
    std::size_t estimate_;
};

class TrajectoryDiverged : public NumericalError {
public:
    TrajectoryDiverged(double t, std::uint64_t seed, std::uint64_t index)
        : NumericalError("trajectory diverged at t=" + std::to_string(t) + " (seed=" +
                         std::to_string(seed) + ", index=" + std::to_string(index) + ")"),
          t_(t), seed_(seed), index_(index) {}
    double time() const noexcept { return t_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t index() const noexcept { return index_; }

private:
    double t_;
    std::uint64_t seed_;
    std::uint64_t index_;
};

class TruncationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace nmqsd
