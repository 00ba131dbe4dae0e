#pragma once

#include <stdexcept>
#include <string>

namespace gcnlab {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, shape mismatches, violated preconditions.
struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Unreadable, truncated or wrong-magic files; parse failures carry a line number.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf encountered where only finite values are allowed.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace gcnlab
