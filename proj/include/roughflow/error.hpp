#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace roughflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument to a numerical routine (bad dimension, exponent, scale...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Rejected experiment configuration; `field()` names the offending path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A state left the finite range (or the 1e12 cap) during time stepping.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string where, std::size_t step)
      : Error(where + ": state diverged at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

/// A requested discretization would exceed the memory budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

}  // namespace roughflow
