#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marksweep/checkpoint.hpp"
#include "marksweep/intensify.hpp"
#include "marksweep/losses.hpp"
#include "marksweep/net.hpp"
#include "marksweep/optim.hpp"

namespace marksweep {

struct TrainConfig {
  Schedule schedule;  // base_lr 1e-3, warmup 150, total 3000
  int batch_size = 16;
  int patch_size = 64;
  std::uint64_t seed = 1;
  NoiseParams noise;
  LossWeights weights;
  Architecture arch;
  /// PNG directories; may be empty when synthetic_images > 0.
  std::vector<std::string> dataset_dirs;
  /// Procedural textures added to the pool in memory.
  int synthetic_images = 200;
  int synthetic_size = 128;
  double val_fraction = 0.2;
  int val_every = 250;
  int val_patches = 32;
  /// 0 disables intermediate checkpoints; the final one is always written.
  int checkpoint_every = 500;
  bool hflip = true;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, const std::string& path = "train");
};

struct TrainLogRow {
  int step = 0;
  double lr = 0;
  LossTerms terms;
  double val_psnr = 0;   ///< NaN when no validation ran at this step
  double val_total = 0;  ///< NaN when no validation ran at this step
};

struct ValidationResult {
  double total = 0;
  double psnr = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  ValidationResult initial;
  ValidationResult final;
  std::vector<TrainLogRow> log;
};

struct TrainOutputs {
  std::string checkpoint_path;  ///< required
  std::string log_csv_path;     ///< optional
  /// Called after each step with the log row; may be empty.
  std::function<void(const TrainLogRow&)> on_step;
};

/// Clean images after the per-image 80/20 split.
struct TrainData {
  std::vector<ImageTensor> train;
  std::vector<ImageTensor> val;
};

TrainData load_train_data(const TrainConfig& cfg);

/// One training sample: random crop (+ optional flip) of a clean image and its intensification.
struct Sample {
  ImageTensor x;
  ImageTensor x_n;
  Raster noise;
};

Sample make_sample(const std::vector<ImageTensor>& pool, const TrainConfig& cfg, std::uint64_t stream,
                   std::uint64_t index);

ValidationResult validate_model(const NetParams<float>& params, const TrainData& data, const TrainConfig& cfg);

/// Loss and parameter gradient of one sample (gradient accumulated into grads).
LossTerms sample_gradient(const NetParams<float>& params, const Sample& s, const LossWeights& w,
                          std::vector<float>& grads);

/// Full training loop. Throws kNumeric after saving the last good state when the
/// loss or gradient goes non-finite.
TrainResult train(const TrainConfig& cfg, const TrainOutputs& out);

}  // namespace marksweep
