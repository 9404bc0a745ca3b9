#pragma once

#include <stdexcept>
#include <string>

namespace lifelora {

// Error taxonomy. The CLI maps these onto exit codes:
//   usage/shape -> 2, format/compatibility -> 3, numeric -> 4, I/O -> 1.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace lifelora
