#include "voltgrid/error.hpp"

#include <sstream>

namespace voltgrid {
namespace {

std::string located(const std::string& what, std::optional<int> line,
                    std::optional<int> column) {
  if (!line) return what;
  std::ostringstream os;
  os << "line " << *line;
  if (column) os << ", column " << *column;
  os << ": " << what;
  return os.str();
}

std::string joined(const std::vector<std::string>& items) {
  std::ostringstream os;
  os << "invalid case:";
  for (const auto& v : items) os << "\n  - " << v;
  return os.str();
}

std::string islanded_message(const std::vector<int>& buses) {
  std::ostringstream os;
  os << "network is islanded; unreachable buses:";
  for (int b : buses) os << ' ' << b;
  return os.str();
}

}  // namespace

ParseError::ParseError(const std::string& what, std::optional<int> line,
                       std::optional<int> column)
    : Error(located(what, line, column)), line_(line), column_(column) {}

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error(joined(violations)), violations_(std::move(violations)) {}

IslandedError::IslandedError(std::vector<int> isolated_buses)
    : Error(islanded_message(isolated_buses)),
      isolated_(std::move(isolated_buses)) {}

ConfigError::ConfigError(const std::string& field, const std::string& message)
    : Error(field + ": " + message), field_(field) {}

}  // namespace voltgrid
