#pragma once

#include <stdexcept>
#include <string>

namespace hflow {

/// Invalid configuration: bad chart parameters, malformed frame spec,
/// inconsistent dimensions, unusable resolution.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Serialization failures: unreadable files, version or shape mismatches.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A frame (or gauge) matrix fell below the invertibility floor at some node.
class SingularFrameError : public std::runtime_error {
public:
    explicit SingularFrameError(const std::string& what) : std::runtime_error(what) {}
};

/// Two internally equivalent formulas disagreed beyond their guard tolerance.
/// Signals a convention bug in the calling code, never a data problem.
class IdentityViolationError : public std::runtime_error {
public:
    explicit IdentityViolationError(const std::string& what) : std::runtime_error(what) {}
};

/// Runtime numerical failure: non-finite values, step collapse outside the
/// recognized blow-up protocol, or a solver that cannot continue.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace hflow
