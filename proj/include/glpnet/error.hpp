#pragma once

#include <stdexcept>
#include <string>

namespace glpnet {

// Base for all library failures; subclasses map to CLI exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between tensors.
struct DimensionError : Error {
    using Error::Error;
};

// An operation was called outside its contract (non-scalar loss, iteration
// past the schedule end, degenerate batch, ...).
struct ContractError : Error {
    using Error::Error;
};

// Bad input data: unreadable files, malformed headers, out-of-range labels,
// checkpoint/config mismatches.
struct DataError : Error {
    using Error::Error;
};

// Inconsistent or unsupported configuration.
struct ConfigError : Error {
    using Error::Error;
};

// NaN/Inf values or a failed numerical check.
struct NumericalError : Error {
    using Error::Error;
};

inline void require_dim(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}
inline void require_contract(bool ok, const std::string& msg) {
    if (!ok) throw ContractError(msg);
}
inline void require_data(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}
inline void require_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace glpnet
