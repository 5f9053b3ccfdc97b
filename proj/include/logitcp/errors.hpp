#pragma once

#include <stdexcept>
#include <string>

namespace logitcp {

/// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// A direction vector collapsed to zero (e.g. a vanishing contraction
/// in a power step). Callers typically re-initialize.
class DegenerateDirection : public std::runtime_error {
 public:
  explicit DegenerateDirection(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration or argument outside its documented range.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A ratio of deviances has a zero denominator.
class UndefinedRatio : public std::domain_error {
 public:
  explicit UndefinedRatio(const std::string& what) : std::domain_error(what) {}
};

}  // namespace logitcp
