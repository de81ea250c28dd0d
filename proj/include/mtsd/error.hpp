#pragma once

#include <stdexcept>
#include <string>

namespace mtsd {

// Base for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values, division by zero, nonpositive input in multiplicative mode.
class NumericError : public Error {
public:
    using Error::Error;
};

// API misuse: bad arguments, consumed tape, invalid part index.
class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed architecture descriptor. Carries the offending character position.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what + " (at position " + std::to_string(position) + ")"), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

// Dataset directory or checkpoint could not be read.
class LoadError : public Error {
public:
    using Error::Error;
};

// Raw dataset import failed.
class ImportError : public Error {
public:
    using Error::Error;
};

} // namespace mtsd
