#pragma once

#include <stdexcept>
#include <string>

namespace kt {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of a call was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Input file does not follow its declared layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Grade symbol outside the known alphabet, or an ungraded record reached binarization.
class ClassificationError : public Error {
public:
    using Error::Error;
};

/// A value cannot be mapped through a vocabulary or interaction encoding.
class EncodingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss, gradient or objective value.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace kt
