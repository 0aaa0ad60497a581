#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "marksweep/net.hpp"
#include "marksweep/optim.hpp"

namespace marksweep {

/// Network parameters, optimizer state and a free-form manifest echo.
struct Checkpoint {
  NetParams<float> params;
  OptimState optim;
  std::int64_t step = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
};

/// Layout: "MSWEEP01", u32 LE manifest length, JSON manifest, float32 LE blocks
/// (params, adam m, adam v), SHA-256 of all preceding bytes. Written via a
/// temporary file and rename so an interrupted save never leaves a torn file.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// Verifies magic, lengths and hash. When expected is given the stored
/// architecture must match it exactly.
Checkpoint load_checkpoint(const std::string& path, const Architecture* expected = nullptr);

/// Hex SHA-256 of a byte range / of a whole file.
std::string sha256_hex(const void* data, std::size_t size);
std::string file_sha256(const std::string& path);

}  // namespace marksweep
