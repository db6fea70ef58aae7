#pragma once

#include <stdexcept>
#include <string>

namespace anonypipe {

/// Base class for every failure raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A domain value or call contract was violated (degenerate box, dimension
/// mismatch, malformed scores, ...).
struct ValidationError : Error {
    using Error::Error;
};

/// Run configuration could not be resolved or failed an invariant.
struct ConfigError : Error {
    using Error::Error;
};

/// A pluggable backend (detector, extractor, inpainter, embedder) failed.
struct BackendError : Error {
    using Error::Error;
};

/// Filesystem or image codec failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace anonypipe
