#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace causalreg {

/// A value violates a documented invariant (graph, spec, or config).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A name or id does not refer to anything known.
class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Malformed input text. `line()` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Non-finite values showed up during a numeric computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace causalreg
