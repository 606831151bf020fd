#pragma once

#include <stdexcept>
#include <string>

namespace lfa {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed record in a rating file (message carries the line number).
class ParseError : public Error {
public:
    using Error::Error;
};

/// The same (user, item) pair appeared more than once.
class DuplicateEntryError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A dataset split could not be formed.
class SplitError : public Error {
public:
    using Error::Error;
};

/// The synthetic generator was asked for an impossible matrix.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// A row or column group has no known training entries.
class EmptyGroupError : public Error {
public:
    using Error::Error;
};

/// An optimizer produced a non-finite value.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// An evaluation was requested on an empty entry set.
class EvalError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace lfa
