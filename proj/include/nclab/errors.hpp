#pragma once

#include <stdexcept>
#include <string>

namespace nclab {

/// Base for every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite entries, asymmetric input to a symmetric solver, bad scalars.
struct InvalidInput : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

/// Metric requested outside its domain (e.g. NC2 with d < K-1).
struct UnsupportedDimension : Error {
    using Error::Error;
};

/// Input for which a quantity is undefined (zero class block, zero norm).
struct DegenerateInput : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    DivergenceError(const std::string& what, double step)
        : Error(what), step_size(step) {}
    double step_size;
};

} // namespace nclab
