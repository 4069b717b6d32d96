#pragma once

#include <stdexcept>
#include <string>

namespace splat {

// Numeric-domain failures: NaN/Inf escaping an op, singular matrices, etc.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched tensor/image extents or coefficient counts.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (bad magic, truncation, unsupported variant).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: preconditions the caller is responsible for.
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Bad user input: config keys, CLI flags, inconsistent dataset.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace splat
