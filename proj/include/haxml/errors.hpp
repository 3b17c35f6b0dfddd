#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace haxml {

// Malformed or out-of-contract input data. `line` is 1-based when the error
// was found in a text stream, 0 otherwise.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Numerical failure: training divergence, non-finite loss or parameters.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace haxml
