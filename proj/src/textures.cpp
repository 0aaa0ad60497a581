#include "marksweep/textures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "marksweep/error.hpp"
#include "marksweep/image_io.hpp"
#include "marksweep/rng.hpp"

namespace marksweep {

namespace fs = std::filesystem;

Raster gaussian_blur(const Raster& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= s;
  const int h = img.height(), w = img.width(), c = img.channels();
  Raster tmp(h, w, c), out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img(y, std::clamp(x + i, 0, w - 1), ch);
        tmp(y, x, ch) = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(std::clamp(y + i, 0, h - 1), x, ch);
        out(y, x, ch) = acc;
      }
  return out;
}

namespace {

// Dense clutter: natural photos at this scale are busy, and edge coverage
// decides how much of the image the intensifier reaches. Denser than this and
// host interference starts to cost the watermark channel its calibration.
constexpr int kMinShapes = 100, kShapeRange = 100;
constexpr double kMinSize = 0.015, kSizeRange = 0.07;

struct Color {
  double v[3];
};

Color random_color(Rng& rng) {
  // Bimodal brightness so neighbouring regions usually differ strongly in luma.
  const double level = (rng() >> 63) ? 0.65 + 0.3 * uniform01(rng) : 0.05 + 0.3 * uniform01(rng);
  Color c;
  for (double& v : c.v) v = std::clamp(level + 0.2 * (uniform01(rng) - 0.5), 0.0, 1.0);
  return c;
}

}  // namespace

ImageTensor synth_texture(std::uint64_t seed, int height, int width, double edge_sigma) {
  require(height >= 1 && width >= 1, ErrorCode::kInvalidArgument, "texture dims must be positive");
  Rng rng(derive_seed(seed, {0x74657874, static_cast<std::uint64_t>(height), static_cast<std::uint64_t>(width)}));
  Raster img(height, width, 3);
  const double scale = std::min(height, width);

  // Background: two-colour linear ramp with a slow sinusoidal shading.
  Color c0 = random_color(rng), c1 = random_color(rng);
  const double theta = 2.0 * std::numbers::pi * uniform01(rng);
  const double fx = (0.5 + 1.5 * uniform01(rng)) / width, fy = (0.5 + 1.5 * uniform01(rng)) / height;
  const double phase = 2.0 * std::numbers::pi * uniform01(rng);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double t = ((x - width / 2.0) * std::cos(theta) + (y - height / 2.0) * std::sin(theta)) / scale + 0.5;
      t = std::clamp(t, 0.0, 1.0);
      const double shade = 0.08 * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
      for (int c = 0; c < 3; ++c) img(y, x, c) = c0.v[c] * (1 - t) + c1.v[c] * t + shade;
    }

  // Shapes: ellipses, rectangles and half-planes, each with its own gentle gradient.
  const int shapes = kMinShapes + static_cast<int>(uniform_index(rng, kShapeRange));
  for (int s = 0; s < shapes; ++s) {
    const int kind = static_cast<int>(uniform_index(rng, 3));
    const double cx = uniform01(rng) * width, cy = uniform01(rng) * height;
    const double rx = scale * (kMinSize + kSizeRange * uniform01(rng)), ry = scale * (kMinSize + kSizeRange * uniform01(rng));
    const double ang = std::numbers::pi * uniform01(rng);
    const double ca = std::cos(ang), sa = std::sin(ang);
    Color col = random_color(rng);
    const double gx = (uniform01(rng) - 0.5) * 0.3 / scale, gy = (uniform01(rng) - 0.5) * 0.3 / scale;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = dx * ca + dy * sa, v = -dx * sa + dy * ca;
        bool inside = false;
        if (kind == 0) inside = (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
        else if (kind == 1) inside = std::abs(u) <= rx && std::abs(v) <= ry;
        else inside = u > 0.0 && std::abs(v) <= 1.5 * ry && u <= 1.5 * rx;
        if (!inside) continue;
        const double g = gx * dx + gy * dy;
        for (int c = 0; c < 3; ++c) img(y, x, c) = col.v[c] + g;
      }
  }
  // Soft boundaries keep the scene's energy out of the mid and high frequencies.
  const double drawn = 0.5 + 0.4 * uniform01(rng);
  const double sigma = edge_sigma >= 0.0 ? edge_sigma : drawn;
  return ImageTensor::clamped(gaussian_blur(img, sigma));
}

std::vector<fs::path> write_texture_dataset(const fs::path& dir, int count, std::uint64_t seed, int height,
                                            int width) {
  require(count >= 1, ErrorCode::kInvalidArgument, "texture count must be >= 1");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create directory " + dir.string());
  std::vector<fs::path> out;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "tex_%04d.png", i);
    fs::path p = dir / name;
    save_image(synth_texture(derive_seed(seed, {static_cast<std::uint64_t>(i)}), height, width), p.string());
    out.push_back(p);
  }
  return out;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::kFileNotFound, "dataset directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return out;
}

}  // namespace marksweep
