#pragma once

#include <stdexcept>
#include <string>

namespace mrgbsde {

// Base class for every error the library raises.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Lattice spacing too small for the upper volatility: dx < sigma_high * sqrt(dt).
struct CflViolation : Error {
    using Error::Error;
};

// Implicit step has no contraction: lipschitz_L * dt >= 1.
struct NoContraction : Error {
    using Error::Error;
};

// Container arities or slice ranges do not line up.
struct DimensionMismatch : Error {
    using Error::Error;
};

// Window terminal violates the aggregate constraint at the terminal slice.
struct TerminalConstraintViolated : Error {
    using Error::Error;
};

// Solver or grid configuration outside its admissible range.
struct InvalidConfig : Error {
    using Error::Error;
};

// Dominated-expectation specification outside its admissible range.
struct InvalidSpec : Error {
    using Error::Error;
};

// Scenario JSON is malformed or missing required fields.
struct SchemaError : Error {
    using Error::Error;
};

// A declared standing assumption fails on the given data.
struct AssumptionViolated : Error {
    using Error::Error;
};

// Requested window length does not align with the slice grid.
struct WindowMisaligned : Error {
    using Error::Error;
};

// Bad command line or study input.
struct InputError : Error {
    using Error::Error;
};

// Expression source error; offset is the 0-based character position.
struct ParseError : Error {
    ParseError(const std::string& message, std::size_t position)
        : Error(message + " (offset " + std::to_string(position) + ")"),
          offset(position),
          base(message) {}
    std::size_t offset;
    std::string base;  // message without the offset suffix
};

}  // namespace mrgbsde
