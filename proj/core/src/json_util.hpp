#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "voltgrid/error.hpp"

namespace voltgrid::detail {

/// Reads optional fields from a config object. Every key must be consumed,
/// so misspelled keys surface as errors instead of silently defaulting.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string path_of(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_of(key), "has the wrong type");
    }
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!has(key)) throw ConfigError(path_of(key), "is required");
    get(key, out);
  }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  /// Throws for any key never asked about.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_of(it.key()), "unknown field");
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace voltgrid::detail
