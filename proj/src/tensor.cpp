#include "marksweep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace marksweep {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kFileNotFound: return "file_not_found";
    case ErrorCode::kUnsupportedFormat: return "unsupported_format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kGeometry: return "geometry";
    case ErrorCode::kCheckpoint: return "checkpoint";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

namespace {

void check_dims(int h, int w, int c) {
  require(h >= 0 && w >= 0 && c >= 0, ErrorCode::kInvalidArgument, "negative tensor dimension");
}

struct Tap {
  int i0;
  int i1;
  double frac;
};

Tap source_tap(int i, int in, int out) {
  double src = (i + 0.5) * static_cast<double>(in) / out - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in - 1));
  int i0 = static_cast<int>(std::floor(src));
  int i1 = std::min(i0 + 1, in - 1);
  return {i0, i1, src - i0};
}

}  // namespace

Raster::Raster(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Raster::Raster(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  require(data_.size() == static_cast<std::size_t>(height) * width * channels,
          ErrorCode::kDimensionMismatch, "raster data length does not match dimensions");
}

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : Raster(height, width, channels, fill) {
  require(std::isfinite(fill) && fill >= 0.0 && fill <= 1.0, ErrorCode::kInvalidArgument,
          "image fill value outside [0,1]");
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : Raster(height, width, channels, std::move(data)) {
  for (double v : values()) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorCode::kInvalidArgument,
            "image intensity outside [0,1]");
  }
}

ImageTensor ImageTensor::clamped(const Raster& r) {
  ImageTensor out(r.height(), r.width(), r.channels());
  auto src = r.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    double v = src[i];
    dst[i] = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  }
  return out;
}

void ImageTensor::clamp() {
  for (double& v : data()) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
}

ImageTensor to_luma(const ImageTensor& img) {
  if (img.channels() == 1) return img;
  require(img.channels() == 3, ErrorCode::kInvalidArgument, "to_luma expects 1 or 3 channels");
  ImageTensor out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double v = 0.299 * img(y, x, 0) + 0.587 * img(y, x, 1) + 0.114 * img(y, x, 2);
      out(y, x, 0) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

Raster bilinear_resize_raw(const Raster& img, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, ErrorCode::kInvalidArgument, "resize target dimension must be >= 1");
  require(img.height() >= 1 && img.width() >= 1, ErrorCode::kInvalidArgument, "resize of empty image");
  if (out_h == img.height() && out_w == img.width()) return img;
  Raster out(out_h, out_w, img.channels());
  const int ch = img.channels();
  for (int y = 0; y < out_h; ++y) {
    Tap ty = source_tap(y, img.height(), out_h);
    for (int x = 0; x < out_w; ++x) {
      Tap tx = source_tap(x, img.width(), out_w);
      for (int c = 0; c < ch; ++c) {
        double top = img(ty.i0, tx.i0, c) * (1 - tx.frac) + img(ty.i0, tx.i1, c) * tx.frac;
        double bot = img(ty.i1, tx.i0, c) * (1 - tx.frac) + img(ty.i1, tx.i1, c) * tx.frac;
        out(y, x, c) = top * (1 - ty.frac) + bot * ty.frac;
      }
    }
  }
  return out;
}

Raster bilinear_resize_adjoint(const Raster& grad_out, int in_h, int in_w) {
  if (grad_out.height() == in_h && grad_out.width() == in_w) return grad_out;
  Raster g(in_h, in_w, grad_out.channels());
  const int ch = grad_out.channels();
  for (int y = 0; y < grad_out.height(); ++y) {
    Tap ty = source_tap(y, in_h, grad_out.height());
    for (int x = 0; x < grad_out.width(); ++x) {
      Tap tx = source_tap(x, in_w, grad_out.width());
      for (int c = 0; c < ch; ++c) {
        double v = grad_out(y, x, c);
        g(ty.i0, tx.i0, c) += v * (1 - ty.frac) * (1 - tx.frac);
        g(ty.i0, tx.i1, c) += v * (1 - ty.frac) * tx.frac;
        g(ty.i1, tx.i0, c) += v * ty.frac * (1 - tx.frac);
        g(ty.i1, tx.i1, c) += v * ty.frac * tx.frac;
      }
    }
  }
  return g;
}

ImageTensor bilinear_resize(const ImageTensor& img, int out_h, int out_w) {
  return ImageTensor::clamped(bilinear_resize_raw(img, out_h, out_w));
}

ImageTensor crop(const ImageTensor& img, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && h >= 1 && w >= 1 && y0 + h <= img.height() && x0 + w <= img.width(),
          ErrorCode::kInvalidArgument, "crop window outside image");
  ImageTensor out(h, w, img.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) = img(y0 + y, x0 + x, c);
  return out;
}

ImageTensor center_crop(const ImageTensor& img, double ratio) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorCode::kInvalidArgument,
          "crop ratio must lie in (0,1], got " + std::to_string(ratio));
  int oh = std::max(1, static_cast<int>(std::floor(ratio * img.height())));
  int ow = std::max(1, static_cast<int>(std::floor(ratio * img.width())));
  return crop(img, (img.height() - oh) / 2, (img.width() - ow) / 2, oh, ow);
}

ImageTensor reflect_pad(const ImageTensor& img, int out_h, int out_w) {
  require(out_h >= img.height() && out_w >= img.width(), ErrorCode::kInvalidArgument,
          "reflect_pad target smaller than image");
  if (out_h == img.height() && out_w == img.width()) return img;
  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  ImageTensor out(out_h, out_w, img.channels());
  for (int y = 0; y < out_h; ++y) {
    int sy = mirror(y, img.height());
    for (int x = 0; x < out_w; ++x) {
      int sx = mirror(x, img.width());
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) = img(sy, sx, c);
    }
  }
  return out;
}

Raster subtract(const Raster& a, const Raster& b) {
  require(a.same_shape(b), ErrorCode::kDimensionMismatch, "subtract: shape mismatch");
  Raster out(a.height(), a.width(), a.channels());
  auto da = a.data(), db = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < da.size(); ++i) dst[i] = da[i] - db[i];
  return out;
}

}  // namespace marksweep
