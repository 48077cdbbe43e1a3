#pragma once

#include <stdexcept>
#include <string>

namespace autos {

// Floor for probabilities entering logs / quotients.
inline constexpr double kProbFloor = 1e-12;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

// No source samples of a class in a domain; the (k,c) cell is skipped upstream.
struct EmptyCluster : std::runtime_error {
    explicit EmptyCluster(const std::string& msg) : std::runtime_error("empty cluster: " + msg) {}
};

struct EmptyDomain : std::runtime_error {
    explicit EmptyDomain(const std::string& msg) : std::runtime_error("empty domain: " + msg) {}
};

}  // namespace autos
