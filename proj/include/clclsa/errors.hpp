#pragma once

#include <stdexcept>
#include <string>

namespace clclsa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value is outside the domain an operation accepts (probabilities,
/// labels, hyperparameters, view indices...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A caller violated a documented precondition of an operation.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. The message carries file and line context.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure (unreadable input, unwritable output).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace clclsa
