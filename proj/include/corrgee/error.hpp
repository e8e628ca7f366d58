#pragma once

#include <stdexcept>
#include <string>

namespace corrgee {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files / column selections.
struct InputError : Error {
    using Error::Error;
};

// Invalid option combination (e.g. shrinking with a non-identity correlation link).
struct ConfigError : Error {
    using Error::Error;
};

// A marginal mean left (0,1) during fitting; carries the advisory text.
struct MeanRangeError : Error {
    std::string cluster_id;
    int observation = 0;  // 1-based within cluster
    MeanRangeError(const std::string& msg, std::string cluster, int obs)
        : Error(msg), cluster_id(std::move(cluster)), observation(obs) {}
};

// A symmetric solve failed; names the offending cluster ("" for pooled matrices).
struct SingularError : Error {
    std::string cluster_id;
    SingularError(const std::string& msg, std::string cluster = "")
        : Error(msg), cluster_id(std::move(cluster)) {}
};

}  // namespace corrgee
