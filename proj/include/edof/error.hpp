#pragma once

#include <stdexcept>

namespace edof
{

// Grid or tensor dimensions that do not agree.
struct ShapeError : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error
{
    using std::domain_error::domain_error;
};

// Operation called in the wrong object state (e.g. backward before forward).
struct StateError : std::logic_error
{
    using std::logic_error::logic_error;
};

struct IoError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// NaN/Inf encountered where a finite value is required.
struct NumericError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

} // namespace edof
