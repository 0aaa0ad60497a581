#include "marksweep/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "marksweep/dct.hpp"
#include "marksweep/error.hpp"
#include "marksweep/rng.hpp"
#include "marksweep/textures.hpp"

namespace marksweep {

namespace {

// ITU T.81 Annex K, tables K.1 and K.2.
constexpr std::array<int, 64> kLumaBase = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24, 40,  57,
    69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55, 64,
    81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr std::array<int, 64> kChromaBase = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
    99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

/// Quantise/dequantise every 8x8 block of a plane padded (replicate) to a multiple of 8.
void jpeg_plane(Plane& p, const std::array<int, 64>& table) {
  const int ph = (p.h + 7) / 8 * 8, pw = (p.w + 7) / 8 * 8;
  for (int by = 0; by < ph; by += 8)
    for (int bx = 0; bx < pw; bx += 8) {
      dct::Block blk;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          blk[y * 8 + x] = p.at(std::min(by + y, p.h - 1), std::min(bx + x, p.w - 1)) - 128.0;
      dct::Block c = dct::forward(blk);
      for (int k = 0; k < 64; ++k) c[k] = std::round(c[k] / table[k]) * table[k];
      dct::Block r = dct::inverse(c);
      for (int y = 0; y < 8 && by + y < p.h; ++y)
        for (int x = 0; x < 8 && bx + x < p.w; ++x) p.at(by + y, bx + x) = r[y * 8 + x] + 128.0;
    }
}

}  // namespace

const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::kMarkSweep: return "marksweep";
    case AttackKind::kJpeg: return "jpeg";
    case AttackKind::kBlur: return "blur";
    case AttackKind::kNoise: return "noise";
    case AttackKind::kCrop: return "crop";
  }
  return "?";
}

AttackKind attack_kind_from_name(const std::string& s) {
  for (AttackKind k : {AttackKind::kMarkSweep, AttackKind::kJpeg, AttackKind::kBlur, AttackKind::kNoise,
                       AttackKind::kCrop})
    if (s == attack_kind_name(k)) return k;
  fail(ErrorCode::kConfig, "unknown attack kind '" + s + "' (expected marksweep, jpeg, blur, noise or crop)");
}

void AttackSpec::validate() const {
  switch (kind) {
    case AttackKind::kJpeg:
      require(quality >= 1 && quality <= 100, ErrorCode::kInvalidArgument, "jpeg quality must lie in [1,100]");
      break;
    case AttackKind::kBlur:
      require(ksize >= 1, ErrorCode::kInvalidArgument, "blur ksize must be >= 1");
      break;
    case AttackKind::kNoise:
      require(noise_sigma >= 0 && std::isfinite(noise_sigma) && std::isfinite(noise_mu), ErrorCode::kInvalidArgument,
              "noise sigma must be >= 0");
      break;
    case AttackKind::kCrop:
      require(crop_ratio > 0 && crop_ratio <= 1, ErrorCode::kInvalidArgument, "crop ratio must lie in (0,1]");
      break;
    case AttackKind::kMarkSweep:
      require(!checkpoint.empty(), ErrorCode::kInvalidArgument, "marksweep attack needs a checkpoint");
      intensify.validate();
      require(sharpen_amount >= 0 && sharpen_radius > 0, ErrorCode::kInvalidArgument,
              "sharpen amount must be >= 0 and radius > 0");
      break;
  }
}

std::string AttackSpec::label() const {
  char buf[64];
  switch (kind) {
    case AttackKind::kJpeg: std::snprintf(buf, sizeof buf, "jpeg_q%d", quality); break;
    case AttackKind::kBlur: std::snprintf(buf, sizeof buf, "blur_k%d", ksize); break;
    case AttackKind::kNoise: std::snprintf(buf, sizeof buf, "noise_s%g", noise_sigma); break;
    case AttackKind::kCrop: std::snprintf(buf, sizeof buf, "crop_%g", crop_ratio); break;
    case AttackKind::kMarkSweep: std::snprintf(buf, sizeof buf, "marksweep%s", sharpen ? "_sharpen" : ""); break;
  }
  return buf;
}

double jpeg_scale(int quality) {
  require(quality >= 1 && quality <= 100, ErrorCode::kInvalidArgument, "jpeg quality must lie in [1,100]");
  return quality < 50 ? 50.0 / quality : 2.0 - quality / 50.0;
}

std::array<int, 64> jpeg_table(int quality, bool chroma) {
  // Integer form of the conventional mapping, as in the IJG reference code.
  const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = chroma ? kChromaBase : kLumaBase;
  std::array<int, 64> t{};
  for (int k = 0; k < 64; ++k) t[k] = std::clamp((base[k] * s + 50) / 100, 1, 255);
  return t;
}

ImageTensor attack_jpeg(const ImageTensor& img, int quality) {
  jpeg_scale(quality);
  const int h = img.height(), w = img.width();
  const auto lt = jpeg_table(quality, false), ct = jpeg_table(quality, true);
  if (img.channels() == 1) {
    Plane y{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) y.at(r, c) = 255.0 * img(r, c, 0);
    jpeg_plane(y, lt);
    ImageTensor out(h, w, 1);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) out(r, c, 0) = std::clamp(y.at(r, c) / 255.0, 0.0, 1.0);
    return out;
  }
  require(img.channels() == 3, ErrorCode::kInvalidArgument, "jpeg attack expects 1 or 3 channels");
  Plane Y{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  const int ch = (h + 1) / 2, cw = (w + 1) / 2;
  Plane Cb{ch, cw, std::vector<double>(static_cast<std::size_t>(ch) * cw)}, Cr = Cb;
  Plane cbf{h, w, Y.v}, crf{h, w, Y.v};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double R = 255 * img(r, c, 0), G = 255 * img(r, c, 1), B = 255 * img(r, c, 2);
      Y.at(r, c) = 0.299 * R + 0.587 * G + 0.114 * B;
      cbf.at(r, c) = 128.0 - 0.168736 * R - 0.331264 * G + 0.5 * B;
      crf.at(r, c) = 128.0 + 0.5 * R - 0.418688 * G - 0.081312 * B;
    }
  // 4:2:0 by 2x2 averaging with replicated odd borders.
  for (int r = 0; r < ch; ++r)
    for (int c = 0; c < cw; ++c) {
      double sb = 0, sr = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = std::min(2 * r + dy, h - 1), xx = std::min(2 * c + dx, w - 1);
          sb += cbf.at(yy, xx);
          sr += crf.at(yy, xx);
        }
      Cb.at(r, c) = sb / 4;
      Cr.at(r, c) = sr / 4;
    }
  jpeg_plane(Y, lt);
  jpeg_plane(Cb, ct);
  jpeg_plane(Cr, ct);
  ImageTensor out(h, w, 3);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double y = Y.at(r, c), cb = Cb.at(r / 2, c / 2) - 128.0, cr = Cr.at(r / 2, c / 2) - 128.0;
      out(r, c, 0) = std::clamp((y + 1.402 * cr) / 255.0, 0.0, 1.0);
      out(r, c, 1) = std::clamp((y - 0.344136 * cb - 0.714136 * cr) / 255.0, 0.0, 1.0);
      out(r, c, 2) = std::clamp((y + 1.772 * cb) / 255.0, 0.0, 1.0);
    }
  return out;
}

double blur_sigma(int ksize) {
  require(ksize >= 1, ErrorCode::kInvalidArgument, "blur ksize must be >= 1");
  const int k = ksize % 2 == 0 ? ksize + 1 : ksize;
  return 0.3 * ((k - 1) * 0.5 - 1) + 0.8;
}

std::vector<double> blur_kernel(int ksize) {
  const int k = ksize % 2 == 0 ? ksize + 1 : ksize;
  const double sigma = blur_sigma(k);
  std::vector<double> t(k);
  double s = 0;
  for (int i = 0; i < k; ++i) {
    const double d = i - (k - 1) / 2.0;
    s += t[i] = std::exp(-d * d / (2 * sigma * sigma));
  }
  for (double& v : t) v /= s;
  return t;
}

ImageTensor attack_blur(const ImageTensor& img, int ksize, bool* promoted) {
  require(ksize >= 1, ErrorCode::kInvalidArgument, "blur ksize must be >= 1");
  if (promoted) *promoted = ksize % 2 == 0;
  if (ksize == 1) return img;
  const auto k = blur_kernel(ksize);
  const int r = static_cast<int>(k.size()) / 2, h = img.height(), w = img.width(), c = img.channels();
  Raster tmp(h, w, c);
  ImageTensor out(h, w, c);
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
        out(y, x, ch) = std::clamp(acc, 0.0, 1.0);
      }
  return out;
}

ImageTensor attack_noise(const ImageTensor& img, double mu, double sigma, std::uint64_t seed) {
  require(sigma >= 0, ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  if (sigma == 0.0 && mu == 0.0) return img;
  Rng rng(derive_seed(seed, {0x61746e73}));
  std::normal_distribution<double> g(mu, sigma);
  ImageTensor out = img;
  for (double& v : out.data()) v = std::clamp(v + (sigma > 0 ? g(rng) : mu), 0.0, 1.0);
  return out;
}

ImageTensor attack_crop(const ImageTensor& img, double ratio) {
  require(ratio > 0 && ratio <= 1, ErrorCode::kInvalidArgument, "crop ratio must lie in (0,1]");
  if (ratio == 1.0) return img;
  return bilinear_resize(center_crop(img, ratio), img.height(), img.width());
}

ImageTensor unsharp_mask(const ImageTensor& img, double amount, double radius) {
  require(amount >= 0, ErrorCode::kInvalidArgument, "unsharp amount must be >= 0");
  require(radius > 0, ErrorCode::kInvalidArgument, "unsharp radius must be > 0");
  if (amount == 0.0) return img;
  Raster blurred = gaussian_blur(img, radius);
  Raster out(img.height(), img.width(), img.channels());
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data()[i] = img.values()[i] + amount * (img.values()[i] - blurred.values()[i]);
  return ImageTensor::clamped(out);
}

MarkSweepResult attack_marksweep(const ImageTensor& x_w, const NetParams<float>& model, const NoiseParams& p,
                                 bool sharpen, std::uint64_t seed, double amount, double radius) {
  const auto t0 = std::chrono::steady_clock::now();
  require(x_w.channels() == 3, ErrorCode::kInvalidArgument, "marksweep attack expects an RGB image");
  const int m = model.arch.multiple();
  const int h = x_w.height(), w = x_w.width();
  const int ph = (h + m - 1) / m * m, pw = (w + m - 1) / m * m;
  Intensified in = intensify(x_w, p, seed);
  ImageTensor input = (ph == h && pw == w) ? in.x_n : reflect_pad(in.x_n, ph, pw);
  ForwardResult<float> fwd = net_forward(input, model, false);
  ImageTensor out = (ph == h && pw == w) ? std::move(fwd.x_hat) : crop(fwd.x_hat, 0, 0, h, w);
  if (sharpen) out = unsharp_mask(out, amount, radius);
  MarkSweepResult r{std::move(out), 0.0};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

ImageTensor apply_attack(const ImageTensor& img, const AttackSpec& spec, std::uint64_t seed,
                         const NetParams<float>* model) {
  switch (spec.kind) {
    case AttackKind::kJpeg: return attack_jpeg(img, spec.quality);
    case AttackKind::kBlur: return attack_blur(img, spec.ksize);
    case AttackKind::kNoise: return attack_noise(img, spec.noise_mu, spec.noise_sigma, seed);
    case AttackKind::kCrop: return attack_crop(img, spec.crop_ratio);
    case AttackKind::kMarkSweep:
      require(model != nullptr, ErrorCode::kCheckpoint, "marksweep attack needs a loaded model");
      return attack_marksweep(img, *model, spec.intensify, spec.sharpen, seed, spec.sharpen_amount,
                              spec.sharpen_radius)
          .image;
  }
  return img;
}

}  // namespace marksweep
