#pragma once

#include <stdexcept>
#include <string>

namespace uprop {

/// Caller violated a documented precondition.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Every importance ratio is -inf; no normalized weights exist.
struct DegenerateWeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tail sample carries no information for a generalized Pareto fit.
struct DegenerateTailError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientTailError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Zero variance, failed Cholesky, or an ill-conditioned transform.
struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double last)
      : std::runtime_error(what), last_iterate(last) {}
  double last_iterate;
};

/// A density or gradient evaluator produced NaN.
struct EvaluationError : std::runtime_error {
  EvaluationError(const std::string& what, long index)
      : std::runtime_error(what), draw_index(index) {}
  long draw_index;
};

struct SamplerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ImputationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SelectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OrchestrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace uprop
