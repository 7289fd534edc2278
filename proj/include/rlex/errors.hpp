#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rlex {

// Bad argument values or shape mismatches at an API boundary.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable serialized data (weight files, CSV, config files).
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required piece of context is missing for the requested operation.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A model violates its own structural invariants.
struct model_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Work refused because it would exceed a hard resource bound.
struct resource_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimization failure; carries the step at which it was detected.
struct training_error : std::runtime_error {
  training_error(const std::string& what, std::size_t at_step)
      : std::runtime_error(what + " (step " + std::to_string(at_step) + ")"), step(at_step) {}
  std::size_t step;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rlex
