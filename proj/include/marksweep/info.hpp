#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "marksweep/intensify.hpp"
#include "marksweep/net.hpp"
#include "marksweep/watermark.hpp"

namespace marksweep {

/// Joint counts of (w, w_hat) pairs: n[w][w_hat].
struct BitChannelStats {
  std::array<std::array<std::uint64_t, 2>, 2> n{};

  void add(int w, int w_hat, std::uint64_t count = 1) { n[w & 1][w_hat & 1] += count; }
  std::uint64_t total() const { return n[0][0] + n[0][1] + n[1][0] + n[1][1]; }
  BitChannelStats& operator+=(const BitChannelStats& o);
  double error_rate() const;
};

/// Base-2 binary entropy, 0 at the endpoints.
double binary_entropy(double p);
/// H(w) from the marginal of w.
double input_entropy(const BitChannelStats& s);
/// Plug-in I(w; w_hat) in bits.
double empirical_mi(const BitChannelStats& s);
/// H(w | w_hat) = H(w) - I(w; w_hat).
double conditional_entropy(const BitChannelStats& s);
/// Lower bound on the error probability. Binary alphabets invert h on [0, 1/2]
/// by bisection (tolerance 1e-9); larger alphabets use (H - 1) / log2(|W| - 1).
double fano_lower_bound(double h_cond, std::uint64_t w_size);

struct DpiConfig {
  int n_trials = 5000;
  int bootstrap = 200;
  /// Below about 96 pixels host interference pulls the clean decode under 0.99.
  int image_size = 96;
  double fano_tolerance = 0.02;
  /// Forces sigma = 0 (and mu = 0): the degenerate chain with identical taps.
  bool force_sigma_zero = false;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

struct DpiStage {
  double mi = 0;
  double mi_std = 0;     ///< bootstrap std
  double h_cond = 0;
  double error_rate = 0;
  double fano_bound = 0;  ///< fano_lower_bound(h_cond, 2)
  bool fano_consistent = false;
  double position_mi_min = 0, position_mi_max = 0, position_mi_std = 0;
  BitChannelStats stats;
};

struct DpiResult {
  /// watermarked, intensified, denoised
  std::array<DpiStage, 3> stages;
  /// Bootstrap std of I_intensified - I_watermarked and I_denoised - I_intensified.
  std::array<double, 2> diff_std{};
  bool ordering_holds = false;  ///< each inequality within 2 std of slack
  bool degenerate = false;      ///< all three taps equal within 2 std
  bool fano_consistent = false;
  int n_trials = 0;
  int bits = 0;
  double calibration_ba = 0;

  nlohmann::json to_json() const;
};

/// Decodes D(x_w), D(x_w + n) and D(M(x_w + n)) over synthetic trials and
/// estimates the proxy mutual information at each tap. Throws kNumeric when
/// the unattacked channel decodes below 0.99.
DpiResult dpi_experiment(const NetParams<float>& model, const WatermarkKey& key, int bits, const NoiseParams& p,
                         const DpiConfig& cfg);

}  // namespace marksweep
