#pragma once

#include <stdexcept>
#include <string>

namespace intercens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An observation whose endpoints cannot describe a censoring interval.
class InvalidInterval : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Data that admits no consistent estimate (empty Turnbull support, empty membership).
class InconsistentData : public Error {
public:
    using Error::Error;
};

class MonotonicityViolation : public Error {
public:
    using Error::Error;
};

class DegenerateWeights : public Error {
public:
    using Error::Error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace intercens
