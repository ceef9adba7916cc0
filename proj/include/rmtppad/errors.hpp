#pragma once

#include <stdexcept>
#include <string>

namespace rmtppad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions do not match what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (thresholds, channel counts, unknown keys...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid runtime input (mismatched masks, empty datasets, bad ids).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Matching problem has no injective assignment (more targets than predictions).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Training must stop: a loss component became non-finite.
class TrainingAbort : public Error {
 public:
  TrainingAbort(const std::string& component, const std::string& what)
      : Error(what), component_(component) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace rmtppad
