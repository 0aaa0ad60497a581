#pragma once

#include <cstdint>
#include <string>

#include "marksweep/intensify.hpp"
#include "marksweep/net.hpp"
#include "marksweep/tensor.hpp"

namespace marksweep {

enum class AttackKind { kMarkSweep, kJpeg, kBlur, kNoise, kCrop };

const char* attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(const std::string& s);

struct AttackSpec {
  AttackKind kind = AttackKind::kMarkSweep;
  // jpeg
  int quality = 50;
  // blur
  int ksize = 10;
  // noise
  double noise_mu = 0.0;
  double noise_sigma = 0.05;
  // crop
  double crop_ratio = 0.9;
  // marksweep
  std::string checkpoint;
  NoiseParams intensify;
  bool sharpen = false;
  double sharpen_amount = 0.5;
  double sharpen_radius = 1.0;

  void validate() const;
  /// Short label used in reports, e.g. "jpeg_q50" or "blur_k10".
  std::string label() const;
};

ImageTensor attack_jpeg(const ImageTensor& img, int quality);

/// Even ksize is promoted to ksize + 1; *promoted reports whether that happened.
ImageTensor attack_blur(const ImageTensor& img, int ksize, bool* promoted = nullptr);
/// sigma = 0.3 ((k - 1) 0.5 - 1) + 0.8 for the (odd) kernel size k.
double blur_sigma(int ksize);
/// Normalised 1-D Gaussian taps for the (promoted) kernel size.
std::vector<double> blur_kernel(int ksize);

/// mu and sigma on the unit intensity scale.
ImageTensor attack_noise(const ImageTensor& img, double mu, double sigma, std::uint64_t seed);

ImageTensor attack_crop(const ImageTensor& img, double ratio);

ImageTensor unsharp_mask(const ImageTensor& img, double amount = 0.5, double radius = 1.0);

/// JPEG quality to table scale factor: 50/q below 50, else 2 - q/50.
double jpeg_scale(int quality);
/// Annex K luminance (chroma=false) or chrominance table scaled for quality, row-major 8x8.
std::array<int, 64> jpeg_table(int quality, bool chroma);

struct MarkSweepResult {
  ImageTensor image;
  double seconds = 0;
};

/// Intensify (noise drawn from seed), denoise, optionally sharpen. Inputs whose dims are not multiples of
/// 16 are reflect-padded and cropped back.
MarkSweepResult attack_marksweep(const ImageTensor& x_w, const NetParams<float>& model, const NoiseParams& p,
                                 bool sharpen, std::uint64_t seed, double amount = 0.5, double radius = 1.0);

/// Applies any non-marksweep spec; marksweep specs need the model overload.
ImageTensor apply_attack(const ImageTensor& img, const AttackSpec& spec, std::uint64_t seed,
                         const NetParams<float>* model = nullptr);

}  // namespace marksweep
