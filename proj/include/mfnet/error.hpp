#pragma once

#include <stdexcept>
#include <string>

namespace mfnet {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or rank of a tensor argument does not fit the operation.
struct DimensionError : Error {
    using Error::Error;
};

// A non-tensor argument is out of its domain.
struct ArgumentError : Error {
    using Error::Error;
};

// Input data failed validation (manifest rows, label vocabulary, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Object is in the wrong state for the requested operation.
struct StateError : Error {
    using Error::Error;
};

// A required precondition of the runtime configuration is not met.
struct PreconditionError : Error {
    using Error::Error;
};

// Persisted bytes are not a valid file of the expected format.
struct FormatError : Error {
    using Error::Error;
};

// Raster payload could not be decoded.
struct DecodeError : Error {
    using Error::Error;
};

// Operating system level I/O failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace mfnet
