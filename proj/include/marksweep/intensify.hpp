#pragma once

#include <cstdint>
#include <vector>

#include "marksweep/tensor.hpp"

namespace marksweep {

/// Parameters of the noise intensification A(x, mu, sigma, s). mu and sigma are
/// quoted on the 0-255 scale and divided by 255 when noise is drawn.
struct NoiseParams {
  double mu = 0.0;
  double sigma = 50.0;
  int s = 5;
  double core_gain = 1.0;
  double ring_gain = 0.4;
  double canny_low = 0.1;
  double canny_high = 0.2;

  void validate() const;
};

/// H x W binary mask.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}
  std::uint8_t& operator()(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t operator()(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

struct Gradients {
  Raster gx;
  Raster gy;
  /// sqrt(gx^2 + gy^2) / (4 sqrt 2), so a unit-range input peaks at 1.
  Raster magnitude;
};

/// 3x3 Sobel with replicate-padded borders. Single-channel input only.
Gradients sobel_gradients(const Raster& gray);

/// Gaussian smoothing (5x5, sigma 1), Sobel, 4-bin non-maximum suppression and
/// 8-connected double-threshold hysteresis.
Mask canny_edges(const Raster& gray, const NoiseParams& p);

/// s x s square dilation; s must be odd.
Mask dilate(const Mask& mask, int s);

struct EdgeMaskPair {
  Mask core;      ///< Canny output
  Mask extended;  ///< dilate(core, s) minus core
};

EdgeMaskPair edge_masks(const Mask& core, int s);

/// core_gain * m_hat on core, ring_gain * m_hat on the ring, 0 elsewhere; m_hat
/// is the magnitude min-max normalised over core and ring.
Raster gradient_weight_mask(const EdgeMaskPair& edges, const Raster& magnitude, const NoiseParams& p);

/// n(px, c) = weight(px) * g, g ~ N(mu/255, (sigma/255)^2) i.i.d.; x_n = clamp(x + n).
/// A draw is consumed for every pixel and channel regardless of its weight.
struct Intensified {
  ImageTensor x_n;
  Raster noise;   ///< pre-clamp n
  Raster weights; ///< single-channel weight mask
};

Intensified inject_noise(const ImageTensor& x, const Raster& weights, const NoiseParams& p,
                         std::uint64_t rng_seed);

Intensified intensify(const ImageTensor& x, const NoiseParams& p, std::uint64_t rng_seed);

}  // namespace marksweep
