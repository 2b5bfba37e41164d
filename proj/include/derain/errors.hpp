#pragma once

#include <stdexcept>
#include <string>

namespace derain {

// Base of every error raised by the library. Commands map these onto exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or contradictory configuration (missing directory, invalid ratio, bad ArchConfig).
struct ConfigError : Error {
    using Error::Error;
};

struct EmptyDatasetError : Error {
    using Error::Error;
};

// Duplicate frame numbers, mismatched image sizes, broken pairing.
struct IntegrityError : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& file, int line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

struct ShapeError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

// Non-finite loss during optimisation.
struct DivergenceError : Error {
    using Error::Error;
};

// Request the CLI refuses to carry out as given (exit code 2), e.g. overwriting data.
struct UsageError : Error {
    using Error::Error;
};

}  // namespace derain
