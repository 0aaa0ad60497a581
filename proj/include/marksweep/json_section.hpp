#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "marksweep/error.hpp"

namespace marksweep {

/// Strict reader for one JSON object: every key must be consumed, otherwise
/// finish() reports the first unknown one by its dotted path.
class JsonSection {
 public:
  JsonSection(const nlohmann::json& j, std::string path);

  template <class T>
  bool get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::kConfig, "config key '" + qualified(key) + "' has the wrong type");
    }
    return true;
  }
  /// Nested object; marks the key consumed. Returns an empty object when absent.
  nlohmann::json child(const char* key);
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void finish() const;

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace marksweep
