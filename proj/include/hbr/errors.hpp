#pragma once

#include <stdexcept>
#include <string>

namespace hbr {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Result not representable in double precision.
class OverflowError : public std::overflow_error {
public:
    using std::overflow_error::overflow_error;
};

/// Malformed or inconsistent configuration input.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Discretisation too coarse or linear system too ill conditioned.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hbr
