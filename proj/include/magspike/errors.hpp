#pragma once

#include <stdexcept>
#include <string>

namespace magspike {

struct InvalidInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure mid-integration; carries the step index in the message.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Too few dwells to estimate lifetimes.
struct EstimationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Activation fit out of tolerance.
struct CalibrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed data file (IDX, JSON schema, ...).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid experiment configuration; maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace magspike
