#pragma once

#include <stdexcept>
#include <string>

namespace effdepth {

// Base class for every error this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Rectangle or coordinate outside the addressed grid.
class BoundsError : public Error {
public:
    using Error::Error;
};

// An operation that needs at least one (or two) valid samples got none.
class EmptyInputError : public Error {
public:
    using Error::Error;
};

// Normalization scale s(d) collapsed to zero (constant input).
class DegenerateScaleError : public Error {
public:
    using Error::Error;
};

// Min-max normalization over a constant or empty value range.
class DegenerateRangeError : public Error {
public:
    using Error::Error;
};

// Input shape or mask state the operation does not define (holes, too small).
class UnsupportedInputError : public Error {
public:
    using Error::Error;
};

// Parameter outside its documented domain (b <= 0, NaN, pi outside [0,1], ...).
class InvalidParameterError : public Error {
public:
    using Error::Error;
};

// Two grids that must share dimensions do not.
class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

// Malformed or truncated file content.
class FormatError : public Error {
public:
    using Error::Error;
};

// A depth backend failed to produce a usable grid.
class BackendError : public Error {
public:
    using Error::Error;
};

// Directory backend: the expected precomputed entry does not exist.
class MissingEntryError : public BackendError {
public:
    using BackendError::BackendError;
};

// Command-line level misuse (maps to exit code 2).
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace effdepth
