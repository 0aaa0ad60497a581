#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "marksweep/spectral.hpp"
#include "marksweep/tensor.hpp"

namespace marksweep {

/// Outer activation of the FaFM attention branches.
enum class GateMode { kSigmoid, kRelu, kForcedOne };

struct Architecture {
  std::vector<int> stage_channels{16, 32, 64, 128};
  double leaky_slope = 0.01;
  int attention_reduction = 4;
  int spatial_kernel = 7;
  GateMode gate = GateMode::kSigmoid;

  int input_channels() const { return 3; }
  int multiple() const { return 1 << stage_channels.size(); }
  void validate() const;
  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
  bool operator==(const Architecture&) const = default;
};

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Name/shape/offset of every trainable tensor; offsets partition [0, total).
struct Manifest {
  std::vector<ParamEntry> entries;
  std::size_t total = 0;

  const ParamEntry& at(const std::string& name) const;
  nlohmann::json to_json() const;
};

Manifest build_manifest(const Architecture& arch);

template <class T>
struct NetParams {
  Architecture arch;
  Manifest manifest;
  std::vector<T> values;

  T* data(const std::string& name) { return values.data() + manifest.at(name).offset; }
  const T* data(const std::string& name) const { return values.data() + manifest.at(name).offset; }

  template <class U>
  NetParams<U> cast() const {
    return NetParams<U>{arch, manifest, std::vector<U>(values.begin(), values.end())};
  }
};

/// He-normal kernels, zero biases, a = b = 0, band weights 1. The output head is
/// zero so the residual network starts as the identity.
template <class T>
NetParams<T> init_params(std::uint64_t seed, const Architecture& arch = {});

/// Reverse-mode record: node values plus backward closures run in reverse order.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::vector<T>& param_grads)>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  int push(FeatureMap<T> value);
  FeatureMap<T>& value(int id) { return values_[id]; }
  const FeatureMap<T>& value(int id) const { return values_[id]; }
  /// Gradient buffer of a node, allocated (zeroed) on first touch.
  FeatureMap<T>& grad(int id);
  bool has_grad(int id) const { return !grads_[id].data.empty(); }

  void record(std::string op, Backward fn);
  bool recording() const { return recording_; }
  std::size_t op_count() const { return ops_.size(); }
  const std::vector<std::string>& op_names() const { return names_; }

  /// Runs the recorded ops in reverse; a tape can be swept once.
  void backward(std::vector<T>& param_grads);

  /// Sign patterns of every activation input, used to detect kinks between
  /// nearby parameter settings in finite-difference checks.
  std::vector<std::uint8_t> activation_signature() const;
  void note_activation_input(int id) { activation_inputs_.push_back(id); }

 private:
  bool recording_;
  bool consumed_ = false;
  std::vector<FeatureMap<T>> values_;
  std::vector<FeatureMap<T>> grads_;
  std::vector<std::string> names_;
  std::vector<Backward> ops_;
  std::vector<int> activation_inputs_;
};

template <class T>
struct EncoderOutput {
  int features = -1;
  std::array<int, 4> skips{};
};

template <class T>
struct ForwardResult {
  ImageTensor x_hat;
  std::unique_ptr<Tape<T>> tape;
  EncoderOutput<T> encoder;
  int output_node = -1;
  /// Unclamped x_n + prediction, HWC; the clamp gate for backward.
  Raster pre_clamp;
  double lfdm_max_imag = 0.0;
  std::size_t param_count = 0;
};

/// Stage-level entry points; all record into the given tape.
template <class T>
EncoderOutput<T> encoder_forward(Tape<T>& tape, int input, const NetParams<T>& params);

template <class T>
std::array<int, 3> lfdm_forward(Tape<T>& tape, int features, const NetParams<T>& params, double* max_imag = nullptr);

template <class T>
struct FafmOutput {
  int fused = -1;
  FeatureMap<T> channel_weights;  ///< shape (c, 3, 1, 1) stored as c x 3 x 1
  FeatureMap<T> spatial_weights;  ///< shape (1, 1, h, w) stored as 1 x h x w
};

template <class T>
FafmOutput<T> fafm_forward(Tape<T>& tape, const std::array<int, 3>& bands, const NetParams<T>& params);

/// Returns the prediction node (3 x H x W) before the residual add.
template <class T>
int decoder_forward(Tape<T>& tape, int fused, const std::array<int, 4>& skips, const NetParams<T>& params);

/// encoder -> LFDM -> FaFM -> decoder; x_hat = clamp(x_n + prediction).
template <class T>
ForwardResult<T> net_forward(const ImageTensor& x_n, const NetParams<T>& params, bool record = true);

/// Parameter gradients given dL/dx_hat (HWC). Consumes the tape.
template <class T>
std::vector<T> net_backward(ForwardResult<T>& forward, const Raster& dl_dxhat);

/// CHW conversions between ImageTensor and feature maps.
template <class T>
FeatureMap<T> to_feature_map(const Raster& img);

}  // namespace marksweep
