#include "marksweep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "marksweep/error.hpp"

namespace marksweep {

double psnr(const Raster& a, const Raster& b) {
  require(a.same_shape(b), ErrorCode::kDimensionMismatch, "psnr: dimension mismatch");
  require(a.size() > 0, ErrorCode::kInvalidArgument, "psnr: empty image");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  if (s == 0.0) return kPsnrIdentical;
  return std::min(kPsnrIdentical, 10.0 * std::log10(static_cast<double>(a.size()) / s));
}

double ssim(const Raster& a, const Raster& b) {
  require(a.same_shape(b), ErrorCode::kDimensionMismatch, "ssim: dimension mismatch");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int h = a.height(), w = a.width(), ch = a.channels();
  const int wy = std::min(11, h), wx = std::min(11, w);
  auto kernel = [](int n) {
    std::vector<double> k(n);
    double s = 0;
    for (int i = 0; i < n; ++i) {
      const double d = i - (n - 1) / 2.0;
      s += k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    }
    for (double& v : k) v /= s;
    return k;
  };
  const auto ky = kernel(wy), kx = kernel(wx);
  const int oh = h - wy + 1, ow = w - wx + 1;
  // Horizontal pass of the five moment images, then vertical pass per output.
  std::vector<double> hm(5 * static_cast<std::size_t>(h) * ow);
  double total = 0;
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        double m[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < wx; ++i) {
          const double va = a(y, x + i, c), vb = b(y, x + i, c), k = kx[i];
          m[0] += k * va;
          m[1] += k * vb;
          m[2] += k * va * va;
          m[3] += k * vb * vb;
          m[4] += k * va * vb;
        }
        for (int j = 0; j < 5; ++j) hm[(static_cast<std::size_t>(j) * h + y) * ow + x] = m[j];
      }
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double m[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < wy; ++i)
          for (int j = 0; j < 5; ++j) m[j] += ky[i] * hm[(static_cast<std::size_t>(j) * h + y + i) * ow + x];
        const double va = m[2] - m[0] * m[0], vb = m[3] - m[1] * m[1], cov = m[4] - m[0] * m[1];
        total += ((2 * m[0] * m[1] + c1) * (2 * cov + c2)) /
                 ((m[0] * m[0] + m[1] * m[1] + c1) * (va + vb + c2));
      }
  }
  return total / (static_cast<double>(oh) * ow * ch);
}

}  // namespace marksweep
