#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace etp {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that cannot be combined by an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Index (label, group, layer) outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A model or pruned model that would violate its structural invariants.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
  explicit ConfigError(const std::string& what) : Error(what) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Training produced a non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A speed-up target that no admissible prune plan reaches.
class UnreachableTarget : public Error {
 public:
  UnreachableTarget(double target, double max_achievable);

  double target() const noexcept { return target_; }
  double max_achievable() const noexcept { return max_achievable_; }

 private:
  double target_;
  double max_achievable_;
};

}  // namespace etp
