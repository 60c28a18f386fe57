#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tomodiff {

/// Inconsistent shapes, geometries or parameters handed to a public entry point.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine hit a condition it cannot recover from (CG breakdown,
/// non-finite values during sampling, diverging training loss).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, long index)
        : std::runtime_error(what + " (at index " + std::to_string(index) + ")"), index_(index) {}

    /// Iteration or step index at which the failure was detected.
    long index() const noexcept { return index_; }

private:
    long index_;
};

/// Malformed on-disk data. Carries the byte offset of the offending field.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& field, std::size_t offset, const std::string& detail)
        : std::runtime_error("invalid field '" + field + "' at byte " + std::to_string(offset) + ": " + detail),
          field_(field), offset_(offset) {}

    const std::string& field() const noexcept { return field_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::string field_;
    std::size_t offset_;
};

} // namespace tomodiff
