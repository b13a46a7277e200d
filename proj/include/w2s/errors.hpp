#pragma once

#include <stdexcept>
#include <string>

namespace w2s {

// Shapes of the operands do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Normal equations are singular and no ridge damping was allowed.
class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A function produced NaN/Inf where a finite value is required.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A result document with a missing or unsupported schema version.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure inside the per-task loop; carries the index of the task.
class TaskError : public std::runtime_error {
 public:
  TaskError(std::size_t task_id, const std::string& message)
      : std::runtime_error("task " + std::to_string(task_id) + ": " + message), task_id_(task_id) {}

  std::size_t task_id() const noexcept { return task_id_; }

 private:
  std::size_t task_id_;
};

}  // namespace w2s
