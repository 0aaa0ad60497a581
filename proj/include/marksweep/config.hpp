#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "marksweep/attacks.hpp"
#include "marksweep/error.hpp"
#include "marksweep/evaluate.hpp"
#include "marksweep/info.hpp"
#include "marksweep/json_section.hpp"
#include "marksweep/intensify.hpp"
#include "marksweep/train.hpp"
#include "marksweep/watermark.hpp"

namespace marksweep {

struct PathsConfig {
  std::string dataset;     ///< clean PNG directory (training and evaluation)
  std::string checkpoint;  ///< model checkpoint written by train, read by attacks
  std::string output_dir;  ///< reports, logs and the resolved config
};

struct WatermarkConfig {
  WatermarkKey key;
  int bits = Payload::kDefaultBits;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  PathsConfig paths;
  WatermarkConfig watermark;
  NoiseParams intensify;
  TrainConfig train;
  std::vector<AttackSpec> attacks;
  EvalConfig eval;
  DpiConfig dpi;

  /// Pushes the global seed, thread count, paths and noise into the module configs.
  void propagate();
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

nlohmann::json to_json(const NoiseParams& p);
/// Keys absent from j keep their value from base.
NoiseParams noise_params_from_json(const nlohmann::json& j, const std::string& path, const NoiseParams& base = {});
nlohmann::json to_json(const WatermarkKey& k);
nlohmann::json to_json(const AttackSpec& s);
/// A marksweep spec's intensify section overrides base key by key.
AttackSpec attack_spec_from_json(const nlohmann::json& j, const std::string& path, const NoiseParams& base = {});

/// Build identifier written next to every output.
std::string code_version();

/// Writes resolved_config.json and VERSION into dir.
void write_resolved_config(const RunConfig& cfg, const std::string& dir);

}  // namespace marksweep
