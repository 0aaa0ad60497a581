#pragma once

#include "marksweep/tensor.hpp"

namespace marksweep {

/// lambda_1..lambda_4: perceptual stand-in, pixel MSE, FFT amplitude, noise estimation.
struct LossWeights {
  double perceptual = 1.0;
  double mse = 35.0;
  double fft = 0.2;
  double noise = 20.0;

  void validate() const;
};

struct LossTerms {
  double perceptual = 0;
  double mse = 0;
  double fft = 0;
  double noise = 0;
  double total = 0;
};

/// All losses accept unclamped rasters; when grad is non-null it receives dL/d x_hat.

/// Mean squared difference of Sobel magnitudes at full and half (bilinear) scale.
double perceptual_loss(const Raster& x_hat, const Raster& x, Raster* grad = nullptr);
double mse_loss(const Raster& x_hat, const Raster& x, Raster* grad = nullptr);
/// Mean |(|F(x_hat)| - |F(x)|)| over bins and channels, divided by H*W.
double fft_amplitude_loss(const Raster& x_hat, const Raster& x, Raster* grad = nullptr);
/// MSE between the implied noise x_n - x_hat and the injected n.
double noise_estimation_loss(const Raster& x_n, const Raster& x_hat, const Raster& n, Raster* grad = nullptr);

struct TotalLoss {
  LossTerms terms;
  Raster grad;
};

TotalLoss total_loss(const Raster& x_hat, const Raster& x, const Raster& x_n, const Raster& n,
                     const LossWeights& w, bool with_grad = true);

}  // namespace marksweep
