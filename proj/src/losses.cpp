#include "marksweep/losses.hpp"

#include <cmath>
#include <vector>

#include "marksweep/error.hpp"
#include "marksweep/fft.hpp"

namespace marksweep {

namespace {

constexpr double kMagEps2 = 1e-6;
constexpr double kAmpGuard = 1e-12;

void check_same(const Raster& a, const Raster& b, const char* what) {
  require(a.same_shape(b), ErrorCode::kDimensionMismatch, std::string(what) + ": dimension mismatch");
}

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

constexpr int kSx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

struct SobelField {
  Raster gx, gy, mag;
};

SobelField sobel_all(const Raster& img) {
  const int h = img.height(), w = img.width(), c = img.channels();
  SobelField s{Raster(h, w, c), Raster(h, w, c), Raster(h, w, c)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double gx = 0, gy = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const double v = img(clampi(y + dy, 0, h - 1), clampi(x + dx, 0, w - 1), ch);
            gx += kSx[dy + 1][dx + 1] * v;
            gy += kSy[dy + 1][dx + 1] * v;
          }
        s.gx(y, x, ch) = gx;
        s.gy(y, x, ch) = gy;
        s.mag(y, x, ch) = std::sqrt(gx * gx + gy * gy + kMagEps2);
      }
  return s;
}

/// Mean squared Sobel-magnitude difference at one scale, accumulating the adjoint into grad.
double sobel_term(const Raster& a, const Raster& b, Raster* grad) {
  SobelField sa = sobel_all(a), sb = sobel_all(b);
  const int h = a.height(), w = a.width(), c = a.channels();
  const double n = static_cast<double>(a.size());
  double loss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = sa.mag.values()[i] - sb.mag.values()[i];
    loss += d * d;
  }
  if (grad) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) {
          const double m = sa.mag(y, x, ch);
          const double dm = 2.0 * (m - sb.mag(y, x, ch)) / n;
          const double dgx = dm * sa.gx(y, x, ch) / m, dgy = dm * sa.gy(y, x, ch) / m;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              (*grad)(clampi(y + dy, 0, h - 1), clampi(x + dx, 0, w - 1), ch) +=
                  kSx[dy + 1][dx + 1] * dgx + kSy[dy + 1][dx + 1] * dgy;
        }
  }
  return loss / n;
}

}  // namespace

void LossWeights::validate() const {
  require(perceptual >= 0 && mse >= 0 && fft >= 0 && noise >= 0, ErrorCode::kInvalidArgument,
          "loss weights must be non-negative");
}

double perceptual_loss(const Raster& x_hat, const Raster& x, Raster* grad) {
  check_same(x_hat, x, "perceptual_loss");
  if (grad) *grad = Raster(x.height(), x.width(), x.channels());
  double loss = sobel_term(x_hat, x, grad);
  const int hh = x.height() / 2, hw = x.width() / 2;
  if (hh >= 1 && hw >= 1) {
    Raster a = bilinear_resize_raw(x_hat, hh, hw), b = bilinear_resize_raw(x, hh, hw);
    Raster ga(hh, hw, x.channels());
    loss += sobel_term(a, b, grad ? &ga : nullptr);
    if (grad) {
      Raster back = bilinear_resize_adjoint(ga, x.height(), x.width());
      for (std::size_t i = 0; i < back.size(); ++i) grad->data()[i] += back.values()[i];
    }
  }
  return loss;
}

double mse_loss(const Raster& x_hat, const Raster& x, Raster* grad) {
  check_same(x_hat, x, "mse_loss");
  const double n = static_cast<double>(x.size());
  if (grad) *grad = Raster(x.height(), x.width(), x.channels());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat.values()[i] - x.values()[i];
    s += d * d;
    if (grad) grad->data()[i] = 2.0 * d / n;
  }
  return s / n;
}

double fft_amplitude_loss(const Raster& x_hat, const Raster& x, Raster* grad) {
  check_same(x_hat, x, "fft_amplitude_loss");
  const int h = x.height(), w = x.width(), c = x.channels();
  const double hw = static_cast<double>(h) * w;
  const double norm = c * hw * hw;
  if (grad) *grad = Raster(h, w, c);
  std::vector<fft::cd> A(h * w), B(h * w);
  double loss = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        A[y * w + xx] = x_hat(y, xx, ch);
        B[y * w + xx] = x(y, xx, ch);
      }
    fft::forward2(A, h, w);
    fft::forward2(B, h, w);
    for (std::size_t u = 0; u < A.size(); ++u) {
      const double ma = std::abs(A[u]), mb = std::abs(B[u]);
      loss += std::abs(ma - mb);
      if (grad) {
        const double s = ma > mb ? 1.0 : (ma < mb ? -1.0 : 0.0);
        A[u] = (ma > kAmpGuard && s != 0.0) ? A[u] * (s / ma) : fft::cd(0.0);
      }
    }
    if (grad) {
      fft::inverse2(A, h, w);  // includes 1/(hw); undo it below
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) (*grad)(y, xx, ch) = A[y * w + xx].real() * hw / norm;
    }
  }
  return loss / norm;
}

double noise_estimation_loss(const Raster& x_n, const Raster& x_hat, const Raster& n, Raster* grad) {
  check_same(x_n, x_hat, "noise_estimation_loss");
  check_same(x_n, n, "noise_estimation_loss");
  const double cnt = static_cast<double>(n.size());
  if (grad) *grad = Raster(n.height(), n.width(), n.channels());
  double s = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double d = x_n.values()[i] - x_hat.values()[i] - n.values()[i];
    s += d * d;
    if (grad) grad->data()[i] = -2.0 * d / cnt;
  }
  return s / cnt;
}

TotalLoss total_loss(const Raster& x_hat, const Raster& x, const Raster& x_n, const Raster& n,
                     const LossWeights& w, bool with_grad) {
  w.validate();
  TotalLoss out;
  if (with_grad) out.grad = Raster(x.height(), x.width(), x.channels());
  Raster g;
  auto add = [&](double weight, double value, double& slot) {
    slot = value;
    out.terms.total += weight * value;
    if (with_grad && weight != 0.0)
      for (std::size_t i = 0; i < g.size(); ++i) out.grad.data()[i] += weight * g.values()[i];
  };
  Raster* gp = with_grad ? &g : nullptr;
  add(w.perceptual, perceptual_loss(x_hat, x, gp), out.terms.perceptual);
  add(w.mse, mse_loss(x_hat, x, gp), out.terms.mse);
  add(w.fft, fft_amplitude_loss(x_hat, x, gp), out.terms.fft);
  add(w.noise, noise_estimation_loss(x_n, x_hat, n, gp), out.terms.noise);
  return out;
}

}  // namespace marksweep
