#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace voltgrid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries a 1-based source location when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::optional<int> line = std::nullopt,
             std::optional<int> column = std::nullopt);

  std::optional<int> line() const { return line_; }
  std::optional<int> column() const { return column_; }

 private:
  std::optional<int> line_;
  std::optional<int> column_;
};

/// A case broke one or more structural invariants.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class IslandedError : public Error {
 public:
  explicit IslandedError(std::vector<int> isolated_buses);
  const std::vector<int>& isolated_buses() const { return isolated_; }

 private:
  std::vector<int> isolated_;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class SpecMismatchError : public Error {
 public:
  using Error::Error;
};

class CorruptFileError : public Error {
 public:
  using Error::Error;
};

/// Raised when an environment or agent is driven outside its contract.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace voltgrid
