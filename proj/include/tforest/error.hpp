#pragma once

#include <stdexcept>
#include <string>

namespace tforest {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad command-line usage or an invalid configuration value.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data. Carries the offending location when known.
class DataError : public Error {
public:
    DataError(const std::string& message, const std::string& file = {}, std::size_t line = 0);

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

/// A file that should exist could not be opened.
class FileNotFoundError : public Error {
public:
    using Error::Error;
};

/// Model file problems: bad magic, version mismatch, truncation, checksum failure.
class ModelFormatError : public Error {
public:
    enum class Kind { bad_magic, version_mismatch, truncated, checksum };

    ModelFormatError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// An internal invariant was violated (a bug, never a user error).
class InvariantViolation : public Error {
public:
    using Error::Error;
};

} // namespace tforest
