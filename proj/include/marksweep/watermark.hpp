#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marksweep/tensor.hpp"

namespace marksweep {

/// m-bit watermark message.
class Payload {
 public:
  static constexpr int kMinBits = 8;
  static constexpr int kDefaultBits = 48;

  explicit Payload(std::vector<std::uint8_t> bits);

  static Payload random(int m, std::uint64_t seed);
  static Payload zeros(int m) { return Payload(std::vector<std::uint8_t>(m, 0)); }
  /// MSB-first hex, ceil(m/4) digits; unused trailing bits of the last digit are zero.
  static Payload from_hex(const std::string& hex, int m);
  std::string to_hex() const;

  int size() const { return static_cast<int>(bits_.size()); }
  std::uint8_t operator[](int i) const { return bits_[i]; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool operator==(const Payload&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct WatermarkKey {
  std::uint64_t seed = 0x6d61726b;
  double alpha = 0.04;
  int coeffs_per_bit = 12;
  /// Zig-zag positions of the carrier coefficients inside each 8x8 block.
  std::vector<int> midband = default_midband();

  static std::vector<int> default_midband();
  void validate() const;
};

/// One carrier chip: coefficient (zig-zag position) in a given block, with sign.
struct Chip {
  int block_y;
  int block_x;
  int zigzag;
  int sign;
};

/// Carrier layout for an image of the given size: chips[i * coeffs_per_bit + j]
/// is chip j of bit i. Pure function of (key, bits, height, width).
std::vector<Chip> carrier_layout(const WatermarkKey& key, int bits, int height, int width);

/// Additive spread-spectrum embedding into mid-band luma DCT coefficients.
ImageTensor embed(const ImageTensor& x, const Payload& w, const WatermarkKey& key);

/// Correlation-sign decoding; ties decode to 1.
Payload decode(const ImageTensor& y, const WatermarkKey& key, int bits = Payload::kDefaultBits);

/// Per-bit correlation statistics (the quantity decode thresholds at 0).
std::vector<double> correlations(const ImageTensor& y, const WatermarkKey& key, int bits);

/// Fraction of matching positions.
double bit_accuracy(const Payload& w, const Payload& w_hat);

struct DetectionThreshold {
  int m = 0;
  double fpr_target = 0;
  int tau_bits = 0;
  double tau_fraction = 0;
  /// P[Binomial(m, 1/2) >= tau_bits].
  double achieved_fpr = 0;
  bool reachable = true;
};

/// Minimal t with P[Binomial(m, 1/2) >= t] <= fpr, by exact log-domain summation.
/// When fpr < 2^-m the target is unreachable and tau = m is returned.
DetectionThreshold detection_threshold(int m, double fpr);

/// Threshold from a user-specified bit-accuracy fraction.
DetectionThreshold threshold_from_fraction(int m, double tau_fraction);

/// log P[Binomial(m, 1/2) >= t].
double log_binomial_upper_tail(int m, int t);

struct Residual {
  Raster delta;                 ///< x - x_w, in [-1,1]
  double mean_abs_255 = 0;      ///< mean |delta| on the 0-255 scale
  double mean_255 = 0;          ///< signed mean on the 0-255 scale
};

Residual residual(const ImageTensor& x, const ImageTensor& x_w);

}  // namespace marksweep
