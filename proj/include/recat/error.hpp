#pragma once

#include <stdexcept>
#include <string>

namespace recat {

/// Error categories surfaced by the library. The CLI maps each to an exit code.
enum class ErrorKind {
    ShapeMismatch,
    InvalidConfig,
    IndexOutOfRange,
    StaleTape,
    NonBinaryMask,
    Io,
    Format,
    CrcMismatch,
    Validation,
    InsufficientSamples,
    TooSmall,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define RECAT_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(ErrorKind::Name, what) {} \
    };

RECAT_DEFINE_ERROR(ShapeMismatch)
RECAT_DEFINE_ERROR(InvalidConfig)
RECAT_DEFINE_ERROR(IndexOutOfRange)
RECAT_DEFINE_ERROR(StaleTape)
RECAT_DEFINE_ERROR(NonBinaryMask)
RECAT_DEFINE_ERROR(CrcMismatch)
RECAT_DEFINE_ERROR(InsufficientSamples)
RECAT_DEFINE_ERROR(TooSmall)

#undef RECAT_DEFINE_ERROR

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

/// Carries the offending configuration key so callers can report it verbatim.
class ValidationError : public Error {
public:
    ValidationError(std::string key, const std::string& what)
        : Error(ErrorKind::Validation, key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace recat
