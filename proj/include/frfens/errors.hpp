#pragma once

#include <stdexcept>
#include <string>

namespace frfens {

// Base error for everything raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (CLI flags, config file, invalid knob values).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input file (dataset CSV, model container, report JSON).
class ParseError : public Error {
public:
    using Error::Error;
};

// Tensor/layer dimension disagreement.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Numerical failure: training divergence, non-finite gradients, total conflict.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace frfens
