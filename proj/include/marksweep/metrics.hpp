#pragma once

#include "marksweep/tensor.hpp"

namespace marksweep {

/// Reported in place of +inf when the images are identical.
constexpr double kPsnrIdentical = 99.0;

/// 10 log10(1 / MSE) on the unit range.
double psnr(const Raster& a, const Raster& b);

/// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, unit dynamic range;
/// mean over valid window positions and channels. Images smaller than the
/// window use a window clipped to the image.
double ssim(const Raster& a, const Raster& b);

}  // namespace marksweep
