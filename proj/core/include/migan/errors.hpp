#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace migan {

// Invalid sizes, shapes, enum values or other caller mistakes.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A non-finite loss or estimate during optimization.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::int64_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

// Unusable or misaligned on-disk datasets.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration documents and unknown keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable checkpoints or checkpoints incompatible with the requested spec.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace migan
