#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lindistill {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Raised whenever an operation produces NaN or Inf from finite inputs.
struct NumericFault : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A numeric fault inside a training loop; parameters are left at the state
// after the last completed step.
struct TrainingFault : NumericFault {
    TrainingFault(std::int64_t step, const std::string& what)
        : NumericFault("numeric fault at step " + std::to_string(step) + ": " + what),
          step(step) {}
    std::int64_t step;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace lindistill
