#pragma once

#include <stdexcept>
#include <string>

namespace mergeforge {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or spec mismatches: wrong layer count, incompatible dims, unknown names.
struct StructuralError : Error {
    using Error::Error;
};

// Non-finite values encountered during computation.
struct NumericError : Error {
    using Error::Error;
};

// Optimization diverged or could not proceed; message carries the epoch index.
struct TrainError : Error {
    using Error::Error;
};

// Bad configuration values (ranges, unknown method names, malformed config files).
struct ConfigError : Error {
    using Error::Error;
};

// File I/O problems.
struct IoError : Error {
    using Error::Error;
};

// Checkpoint parsing failures, each its own type so callers can tell them apart.
struct BadMagicError : IoError {
    using IoError::IoError;
};
struct VersionError : IoError {
    using IoError::IoError;
};
struct SpecHashError : IoError {
    using IoError::IoError;
};
struct TruncatedError : IoError {
    using IoError::IoError;
};
struct KindError : IoError {
    using IoError::IoError;
};

} // namespace mergeforge
