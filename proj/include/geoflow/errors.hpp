#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geoflow {

// Shape or channel count disagreement between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Out-of-range scalar argument (fractions, step counts, tolerances).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Input outside the mathematical domain of an operation (empty sets, zero norms, non-PSD).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Violated calling contract, e.g. backward on a non-scalar or an unfrozen encoder.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class CapacityError : public std::length_error {
public:
    using std::length_error::length_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed binary file; offset is the byte position where parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset)
    {
    }

    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

} // namespace geoflow
