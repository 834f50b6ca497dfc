#pragma once

#include <stdexcept>
#include <string>

namespace clocksync {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters: skew ranges, round counts, probabilities.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed topology, config or wire text. `field()` names the offending entry.
class ParseError : public Error {
 public:
  ParseError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Topology files that parse but break the geometric edge rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DegenerateObservationError : public Error {
 public:
  using Error::Error;
};

class LinearAlgebraError : public Error {
 public:
  using Error::Error;
};

class IdentifiabilityError : public Error {
 public:
  using Error::Error;
};

class DegenerateEstimateError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace clocksync
