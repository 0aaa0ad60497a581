#include "marksweep/intensify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "marksweep/rng.hpp"

namespace marksweep {

void NoiseParams::validate() const {
  require(std::isfinite(mu), ErrorCode::kInvalidArgument, "intensify mu must be finite");
  require(sigma >= 0.0 && std::isfinite(sigma), ErrorCode::kInvalidArgument, "intensify sigma must be >= 0");
  require(s >= 1 && s % 2 == 1, ErrorCode::kInvalidArgument, "structuring element size s must be odd and >= 1");
  require(ring_gain >= 0.0 && ring_gain <= core_gain && core_gain <= 1.0, ErrorCode::kInvalidArgument,
          "gains must satisfy 0 <= ring_gain <= core_gain <= 1");
  require(canny_low < canny_high, ErrorCode::kInvalidArgument, "canny_low must be below canny_high");
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

Raster gaussian5(const Raster& g) {
  double k[5];
  double sum = 0;
  for (int i = 0; i < 5; ++i) {
    k[i] = std::exp(-0.5 * (i - 2) * (i - 2));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  const int h = g.height(), w = g.width();
  Raster tmp(h, w, 1), out(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * g(y, clampi(x + i, 0, w - 1), 0);
      tmp(y, x, 0) = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp(clampi(y + i, 0, h - 1), x, 0);
      out(y, x, 0) = s;
    }
  return out;
}

}  // namespace

Gradients sobel_gradients(const Raster& gray) {
  require(gray.channels() == 1, ErrorCode::kInvalidArgument, "sobel_gradients expects a single channel");
  const int h = gray.height(), w = gray.width();
  Gradients g{Raster(h, w, 1), Raster(h, w, 1), Raster(h, w, 1)};
  const double norm = 4.0 * std::numbers::sqrt2;
  for (int y = 0; y < h; ++y) {
    const int ym = clampi(y - 1, 0, h - 1), yp = clampi(y + 1, 0, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = clampi(x - 1, 0, w - 1), xp = clampi(x + 1, 0, w - 1);
      double gx = (gray(ym, xp, 0) + 2 * gray(y, xp, 0) + gray(yp, xp, 0)) -
                  (gray(ym, xm, 0) + 2 * gray(y, xm, 0) + gray(yp, xm, 0));
      double gy = (gray(yp, xm, 0) + 2 * gray(yp, x, 0) + gray(yp, xp, 0)) -
                  (gray(ym, xm, 0) + 2 * gray(ym, x, 0) + gray(ym, xp, 0));
      g.gx(y, x, 0) = gx;
      g.gy(y, x, 0) = gy;
      g.magnitude(y, x, 0) = std::sqrt(gx * gx + gy * gy) / norm;
    }
  }
  return g;
}

Mask canny_edges(const Raster& gray, const NoiseParams& p) {
  require(gray.channels() == 1, ErrorCode::kInvalidArgument, "canny_edges expects a single channel");
  const int h = gray.height(), w = gray.width();
  Gradients g = sobel_gradients(gaussian5(gray));
  const Raster& mag = g.magnitude;

  // Non-maximum suppression. The strict/non-strict split keeps exactly one of
  // two equal neighbours, so a symmetric step yields a one-pixel line.
  Raster thin(h, w, 1);
  auto at = [&](int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return mag(y, x, 0);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = mag(y, x, 0);
      if (m <= 0.0) continue;
      double angle = std::atan2(g.gy(y, x, 0), g.gx(y, x, 0)) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      double before, after;
      if (angle < 22.5 || angle >= 157.5) {
        before = at(y, x - 1);
        after = at(y, x + 1);
      } else if (angle < 67.5) {
        before = at(y - 1, x - 1);
        after = at(y + 1, x + 1);
      } else if (angle < 112.5) {
        before = at(y - 1, x);
        after = at(y + 1, x);
      } else {
        before = at(y - 1, x + 1);
        after = at(y + 1, x - 1);
      }
      if (m > before && m >= after) thin(y, x, 0) = m;
    }

  // Hysteresis: strong pixels seed a flood fill through weak ones.
  Mask out(h, w);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (thin(y, x, 0) >= p.canny_high && !out(y, x)) {
        out(y, x) = 1;
        stack.push_back(y * w + x);
        while (!stack.empty()) {
          int idx = stack.back();
          stack.pop_back();
          int cy = idx / w, cx = idx % w;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int ny = cy + dy, nx = cx + dx;
              if (ny < 0 || ny >= h || nx < 0 || nx >= w || out(ny, nx)) continue;
              if (thin(ny, nx, 0) >= p.canny_low) {
                out(ny, nx) = 1;
                stack.push_back(ny * w + nx);
              }
            }
        }
      }
  return out;
}

Mask dilate(const Mask& mask, int s) {
  require(s >= 1 && s % 2 == 1, ErrorCode::kInvalidArgument, "dilate: structuring element size must be odd");
  if (s == 1) return mask;
  const int r = s / 2, h = mask.height, w = mask.width;
  Mask tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int dx = -r; dx <= r && !v; ++dx) v = mask(y, clampi(x + dx, 0, w - 1));
      tmp(y, x) = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int dy = -r; dy <= r && !v; ++dy) v = tmp(clampi(y + dy, 0, h - 1), x);
      out(y, x) = v;
    }
  return out;
}

EdgeMaskPair edge_masks(const Mask& core, int s) {
  EdgeMaskPair pair{core, dilate(core, s)};
  for (std::size_t i = 0; i < core.bits.size(); ++i)
    if (core.bits[i]) pair.extended.bits[i] = 0;
  return pair;
}

Raster gradient_weight_mask(const EdgeMaskPair& edges, const Raster& magnitude, const NoiseParams& p) {
  const int h = edges.core.height, w = edges.core.width;
  require(edges.extended.height == h && edges.extended.width == w && magnitude.height() == h &&
              magnitude.width() == w && magnitude.channels() == 1,
          ErrorCode::kDimensionMismatch, "gradient_weight_mask: inconsistent dimensions");
  double lo = INFINITY, hi = -INFINITY;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (edges.core(y, x) || edges.extended(y, x)) {
        lo = std::min(lo, magnitude(y, x, 0));
        hi = std::max(hi, magnitude(y, x, 0));
      }
  Raster weights(h, w, 1);
  if (!(lo <= hi)) return weights;
  const double span = hi - lo;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double mhat = span > 0 ? (magnitude(y, x, 0) - lo) / span : 1.0;
      if (edges.core(y, x)) weights(y, x, 0) = p.core_gain * mhat;
      else if (edges.extended(y, x)) weights(y, x, 0) = p.ring_gain * mhat;
    }
  return weights;
}

Intensified inject_noise(const ImageTensor& x, const Raster& weights, const NoiseParams& p,
                         std::uint64_t rng_seed) {
  require(weights.height() == x.height() && weights.width() == x.width() && weights.channels() == 1,
          ErrorCode::kDimensionMismatch, "inject_noise: weight mask shape mismatch");
  Rng rng(derive_seed(rng_seed, {0x6e6f6973}));
  std::normal_distribution<double> normal(p.mu / 255.0, p.sigma / 255.0);
  const bool degenerate = p.sigma == 0.0;
  Intensified out{x, Raster(x.height(), x.width(), x.channels()), weights};
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx) {
      const double wgt = weights(y, xx, 0);
      for (int c = 0; c < x.channels(); ++c) {
        double g = degenerate ? p.mu / 255.0 : normal(rng);
        double n = wgt * g;
        out.noise(y, xx, c) = n;
        out.x_n(y, xx, c) = std::clamp(x(y, xx, c) + n, 0.0, 1.0);
      }
    }
  return out;
}

Intensified intensify(const ImageTensor& x, const NoiseParams& p, std::uint64_t rng_seed) {
  p.validate();
  ImageTensor luma = to_luma(x);
  Mask core = canny_edges(luma, p);
  EdgeMaskPair edges = edge_masks(core, p.s);
  Gradients g = sobel_gradients(luma);
  Raster weights = gradient_weight_mask(edges, g.magnitude, p);
  return inject_noise(x, weights, p, rng_seed);
}

}  // namespace marksweep
