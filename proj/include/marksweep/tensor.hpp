#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "marksweep/error.hpp"

namespace marksweep {

/// Dense H x W x C array of doubles, row-major with interleaved channels.
/// Values are unbounded; used for residuals, noise maps and gradients.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, double fill = 0.0);
  Raster(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Raster& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  double& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  double operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Pixel-domain image with intensities in [0,1]. Construction validates the
/// range; code that writes through data() is responsible for clamping.
class ImageTensor : public Raster {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, double fill = 0.0);
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  /// Clamps every element into [0,1]; non-finite values map to 0.
  static ImageTensor clamped(const Raster& r);
  void clamp();
};

/// C x H x W feature tensor used inside the denoising network.
template <class T>
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  T& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  T at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct Spectrum {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::complex<double>> data;
};

/// 0.299 R + 0.587 G + 0.114 B. Single-channel input is returned unchanged.
ImageTensor to_luma(const ImageTensor& img);

/// Half-pixel-center (align-corners-false) bilinear resampling; output clamped to [0,1].
ImageTensor bilinear_resize(const ImageTensor& img, int out_h, int out_w);

/// Unclamped bilinear resampling of an arbitrary raster.
Raster bilinear_resize_raw(const Raster& img, int out_h, int out_w);

/// Adjoint of bilinear_resize_raw: scatters a gradient on the output grid back
/// onto an input grid of the given size.
Raster bilinear_resize_adjoint(const Raster& grad_out, int in_h, int in_w);

/// Centered window of floor(ratio * dim) pixels along each axis.
ImageTensor center_crop(const ImageTensor& img, double ratio);

/// Pads to the given size by mirror reflection (edge pixel not repeated).
ImageTensor reflect_pad(const ImageTensor& img, int out_h, int out_w);

/// Top-left window of the given size.
ImageTensor crop(const ImageTensor& img, int y0, int x0, int h, int w);

Raster subtract(const Raster& a, const Raster& b);

}  // namespace marksweep
