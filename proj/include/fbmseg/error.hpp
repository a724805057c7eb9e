#pragma once

#include <stdexcept>
#include <string>

namespace fbmseg {

// Failure classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
    Config = 2,
    Data = 3,
    Numeric = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

/// Invalid parameter or configuration value.
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

/// Malformed, inconsistent or insufficient input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Input too short for the requested operation.
class TooShortError : public DataError {
public:
    explicit TooShortError(const std::string& what) : DataError(what) {}
};

/// Segment without motion in some dimension; features are undefined.
class DegenerateSegmentError : public DataError {
public:
    explicit DegenerateSegmentError(const std::string& what) : DataError(what) {}
};

/// Not enough mixture points survive the length filter.
class InsufficientDataError : public DataError {
public:
    explicit InsufficientDataError(const std::string& what) : DataError(what) {}
};

/// Model file problems: bad magic, version, checksum.
class FormatError : public DataError {
public:
    explicit FormatError(const std::string& what) : DataError(what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

/// Argument outside the mathematical domain of a function (e.g. log of a
/// non-positive value).
class DomainError : public NumericError {
public:
    explicit DomainError(const std::string& what) : NumericError(what) {}
};

} // namespace fbmseg
