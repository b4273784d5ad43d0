#pragma once

#include <stdexcept>
#include <string>

namespace dumpy {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A file on disk does not match the expected layout (magic, version, sizes).
class FormatError : public Error {
public:
    using Error::Error;
};

/// An I/O system call failed.
class StorageError : public Error {
public:
    using Error::Error;
};

/// A node cannot be refined further: every segment already sits at full bit depth.
class CannotSplit : public Error {
public:
    using Error::Error;
};

/// Broken internal invariant; indicates a bug or a caller passing an inconsistent node.
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace dumpy
