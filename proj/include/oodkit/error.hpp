#pragma once

#include <stdexcept>
#include <string>

namespace oodkit {

// Every failure raised by the toolkit derives from Error so callers (and the
// CLI) can tell data problems apart from programming errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

class TruncationError : public Error {
public:
    explicit TruncationError(const std::string& what) : Error("truncation error: " + what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error("data error: " + what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error("parse error: " + what) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error("domain error: " + what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

class CalibrationError : public Error {
public:
    explicit CalibrationError(const std::string& what) : Error("calibration error: " + what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io error: " + what) {}
};

} // namespace oodkit
