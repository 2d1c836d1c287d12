#pragma once

#include <stdexcept>
#include <string>

namespace nncov {

/// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied argument violates a precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Unknown neuron or other key.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Model, profile or coverage configuration do not belong together.
class BindingError : public Error {
public:
    using Error::Error;
};

/// An activation trace does not fit the bound model.
class TraceError : public Error {
public:
    using Error::Error;
};

/// Non-finite or otherwise invalid data values.
class DataError : public Error {
public:
    using Error::Error;
};

// File format errors. Each failure mode has its own type so callers and
// tests can tell them apart.
class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};

class HeaderMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};

class ParseError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace nncov
