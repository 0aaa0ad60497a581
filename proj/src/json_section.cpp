#include "marksweep/json_section.hpp"

namespace marksweep {

JsonSection::JsonSection(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
  require(j_.is_object() || j_.is_null(), ErrorCode::kConfig,
          "config section '" + (path_.empty() ? std::string("<root>") : path_) + "' must be an object");
}

nlohmann::json JsonSection::child(const char* key) {
  auto it = j_.find(key);
  if (it == j_.end()) return nlohmann::json::object();
  seen_.insert(key);
  require(it->is_object(), ErrorCode::kConfig, "config key '" + qualified(key) + "' must be an object");
  return *it;
}

void JsonSection::finish() const {
  if (!j_.is_object()) return;
  for (auto it = j_.begin(); it != j_.end(); ++it)
    if (!seen_.count(it.key())) fail(ErrorCode::kConfig, "unknown config key '" + qualified(it.key()) + "'");
}

}  // namespace marksweep
