#pragma once

#include <stdexcept>
#include <string>

namespace voxsr {

/// Base class for every error this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read, or written.
struct IoError : Error {
    using Error::Error;
};

/// A file header is structurally invalid (bad magic, unsupported datatype, ...).
struct MalformedHeader : Error {
    using Error::Error;
};

/// Array/volume shapes do not satisfy an operation's contract.
struct ShapeError : Error {
    using Error::Error;
};

/// A coordinate lies outside the normalized query domain.
struct DomainError : Error {
    using Error::Error;
};

/// Inconsistent model/run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Checkpoint manifest and payload disagree.
struct MalformedCheckpoint : Error {
    using Error::Error;
};

/// A computation produced NaN/Inf where finite values are required.
struct NumericalError : Error {
    using Error::Error;
};

} // namespace voxsr
