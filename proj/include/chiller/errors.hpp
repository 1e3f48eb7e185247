#pragma once

#include <stdexcept>
#include <string>

namespace chiller {

/// Argument outside the mathematical domain of an operation (negative PLR, zero rating).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or non-physical input data (NaN loads, empty windows).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Caller violated an interface contract (layout mismatch, step after done).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid configuration file or parameter block.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite intermediate values, divergence, rank deficiency.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace chiller
