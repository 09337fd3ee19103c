#pragma once

#include <stdexcept>
#include <string>

namespace nonadiab {

/// Invalid model, grid or run configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical failure during propagation (NaN, degeneracy, edge contact).
/// Maps to CLI exit code 3.
class NumericalAbort : public std::runtime_error {
public:
    explicit NumericalAbort(const std::string& what) : std::runtime_error(what) {}
};

class DegeneracyError : public NumericalAbort {
public:
    explicit DegeneracyError(const std::string& what) : NumericalAbort(what) {}
};

}  // namespace nonadiab
