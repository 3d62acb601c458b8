#ifndef IMPACT_ERRORS_HPP
#define IMPACT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace impact {

// Invalid configuration or argument values (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or missing input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures: factorization breakdown, fatal non-convergence (CLI exit code 4).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace impact

#endif
