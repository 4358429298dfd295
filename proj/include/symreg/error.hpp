#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace symreg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Syntax or semantic error in expression or analysis-spec text.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t position)
        : Error(message), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class DataError : public Error {
public:
    using Error::Error;
};

} // namespace symreg
