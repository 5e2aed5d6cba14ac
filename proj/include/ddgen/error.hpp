#pragma once

#include <stdexcept>
#include <string>

namespace ddgen {

/// Base of every error the library throws. The CLI maps these to exit status 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition on an argument (empty input, out-of-range count, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Image or layer dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite or out-of-range input values.
class InputError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Malformed file: bad magic, truncated payload, ragged or non-numeric CSV.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Numerical failure in a linear-algebra or bound computation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Gradient walk hit a non-finite gradient.
class WalkError : public Error {
public:
    using Error::Error;
};

}  // namespace ddgen
