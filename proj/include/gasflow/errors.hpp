#pragma once

#include <stdexcept>
#include <string>

namespace gasflow {

/// Input files or in-memory model data that violate structural requirements
/// (duplicate ids, disconnected graphs, inverted bounds, ...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Evaluation requested outside the model's physical domain, e.g. a density
/// denominator collapsing to zero in the friction term.
struct StateDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Steady-state Newton failed to converge for the given boundary data.
struct NoSteadyStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Time integration aborted (step-size underflow or repeated Newton failure).
struct IntegrationError : std::runtime_error {
  IntegrationError(const std::string& what, double t_last)
      : std::runtime_error(what), last_valid_time(t_last) {}
  double last_valid_time;  ///< non-dimensional time of the last accepted step
};

}  // namespace gasflow
