#include "marksweep/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marksweep/dct.hpp"
#include "marksweep/rng.hpp"

namespace marksweep {

Payload::Payload(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  require(static_cast<int>(bits_.size()) >= kMinBits, ErrorCode::kInvalidArgument,
          "payload needs at least 8 bits");
  for (auto b : bits_) require(b <= 1, ErrorCode::kInvalidArgument, "payload bits must be 0 or 1");
}

Payload Payload::random(int m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x7061796c}));
  std::vector<std::uint8_t> bits(m);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return Payload(std::move(bits));
}

Payload Payload::from_hex(const std::string& hex, int m) {
  require(m >= kMinBits, ErrorCode::kInvalidArgument, "payload needs at least 8 bits");
  const std::size_t digits = (m + 3) / 4;
  require(hex.size() == digits, ErrorCode::kInvalidArgument,
          "payload hex must have " + std::to_string(digits) + " digits for " + std::to_string(m) + " bits");
  std::vector<std::uint8_t> bits(m);
  for (std::size_t d = 0; d < digits; ++d) {
    char ch = hex[d];
    int v;
    if (ch >= '0' && ch <= '9') v = ch - '0';
    else if (ch >= 'a' && ch <= 'f') v = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F') v = ch - 'A' + 10;
    else fail(ErrorCode::kInvalidArgument, std::string("invalid hex digit '") + ch + "'");
    for (int k = 0; k < 4; ++k) {
      int i = static_cast<int>(d) * 4 + k;
      int bit = (v >> (3 - k)) & 1;
      if (i < m) bits[i] = static_cast<std::uint8_t>(bit);
      else require(bit == 0, ErrorCode::kInvalidArgument, "payload hex has bits beyond m");
    }
  }
  return Payload(std::move(bits));
}

std::string Payload::to_hex() const {
  static const char* kDigits = "0123456789abcdef";
  std::string out;
  for (std::size_t d = 0; d * 4 < bits_.size(); ++d) {
    int v = 0;
    for (int k = 0; k < 4; ++k) {
      std::size_t i = d * 4 + k;
      v = (v << 1) | (i < bits_.size() ? bits_[i] : 0);
    }
    out.push_back(kDigits[v]);
  }
  return out;
}

std::vector<int> WatermarkKey::default_midband() {
  std::vector<int> zz(24);
  std::iota(zz.begin(), zz.end(), 20);
  return zz;
}

void WatermarkKey::validate() const {
  require(alpha >= 0.0 && std::isfinite(alpha), ErrorCode::kInvalidArgument, "watermark alpha must be >= 0");
  require(coeffs_per_bit >= 1, ErrorCode::kInvalidArgument, "coeffs_per_bit must be >= 1");
  require(!midband.empty(), ErrorCode::kInvalidArgument, "midband set is empty");
  std::vector<int> sorted = midband;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorCode::kInvalidArgument,
          "midband indices must be distinct");
  require(sorted.front() > 0 && sorted.back() < 63, ErrorCode::kInvalidArgument,
          "midband must exclude DC (0) and the highest-frequency corner (63)");
}

std::vector<Chip> carrier_layout(const WatermarkKey& key, int bits, int height, int width) {
  key.validate();
  const int by = height / 8, bx = width / 8;
  const std::size_t slots = static_cast<std::size_t>(by) * bx * key.midband.size();
  const std::size_t chips = static_cast<std::size_t>(bits) * key.coeffs_per_bit;
  require(height >= 64 && width >= 64, ErrorCode::kGeometry,
          "image " + std::to_string(height) + "x" + std::to_string(width) +
              " too small for watermarking; minimum is 64x64");
  require(chips <= slots, ErrorCode::kGeometry,
          "image " + std::to_string(height) + "x" + std::to_string(width) + " hosts " + std::to_string(slots) +
              " coefficients, payload needs " + std::to_string(chips));

  Rng rng(derive_seed(key.seed, {0x6c61796f, static_cast<std::uint64_t>(height),
                                 static_cast<std::uint64_t>(width)}));
  std::vector<std::uint32_t> perm(slots);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = 0; i < chips; ++i) {
    std::size_t j = i + uniform_index(rng, slots - i);
    std::swap(perm[i], perm[j]);
  }
  // Carrier signs come from a separate stream keyed by the seed alone.
  Rng sign_rng(derive_seed(key.seed, {0x7369676e}));
  const std::size_t nb = key.midband.size();
  std::vector<Chip> out(chips);
  for (std::size_t i = 0; i < chips; ++i) {
    std::size_t s = perm[i];
    std::size_t block = s / nb;
    out[i] = Chip{static_cast<int>(block / bx), static_cast<int>(block % bx), key.midband[s % nb],
                  (sign_rng() >> 63) ? 1 : -1};
  }
  return out;
}

namespace {

double coefficient(const ImageTensor& luma, const Chip& c) {
  int rc = dct::zigzag_order()[c.zigzag];
  int u = rc / 8, v = rc % 8;
  double s = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) s += luma(c.block_y * 8 + y, c.block_x * 8 + x, 0) * dct::basis(u, v, y, x);
  return s;
}

}  // namespace

ImageTensor embed(const ImageTensor& x, const Payload& w, const WatermarkKey& key) {
  require(x.channels() == 1 || x.channels() == 3, ErrorCode::kInvalidArgument, "embed expects 1 or 3 channels");
  const int m = w.size();
  auto chips = carrier_layout(key, m, x.height(), x.width());
  if (key.alpha == 0.0) return x;

  Raster delta(x.height(), x.width(), 1);
  for (int i = 0; i < m; ++i) {
    const double s = w[i] ? 1.0 : -1.0;
    for (int j = 0; j < key.coeffs_per_bit; ++j) {
      const Chip& c = chips[static_cast<std::size_t>(i) * key.coeffs_per_bit + j];
      int rc = dct::zigzag_order()[c.zigzag];
      int u = rc / 8, v = rc % 8;
      double amp = key.alpha * s * c.sign;
      for (int y = 0; y < 8; ++y)
        for (int xx = 0; xx < 8; ++xx)
          delta(c.block_y * 8 + y, c.block_x * 8 + xx, 0) += amp * dct::basis(u, v, y, xx);
    }
  }
  // Equal offsets on R, G, B move luma by the same amount and leave chroma untouched.
  ImageTensor out = x;
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx) {
      double d = delta(y, xx, 0);
      if (d == 0.0) continue;
      for (int c = 0; c < x.channels(); ++c) out(y, xx, c) = std::clamp(x(y, xx, c) + d, 0.0, 1.0);
    }
  return out;
}

std::vector<double> correlations(const ImageTensor& y, const WatermarkKey& key, int bits) {
  auto chips = carrier_layout(key, bits, y.height(), y.width());
  ImageTensor luma = to_luma(y);
  std::vector<double> corr(bits, 0.0);
  for (int i = 0; i < bits; ++i)
    for (int j = 0; j < key.coeffs_per_bit; ++j) {
      const Chip& c = chips[static_cast<std::size_t>(i) * key.coeffs_per_bit + j];
      corr[i] += c.sign * coefficient(luma, c);
    }
  return corr;
}

Payload decode(const ImageTensor& y, const WatermarkKey& key, int bits) {
  auto corr = correlations(y, key, bits);
  std::vector<std::uint8_t> out(bits);
  for (int i = 0; i < bits; ++i) out[i] = corr[i] >= 0.0 ? 1 : 0;
  return Payload(std::move(out));
}

double bit_accuracy(const Payload& w, const Payload& w_hat) {
  require(w.size() == w_hat.size(), ErrorCode::kDimensionMismatch, "bit_accuracy: payload length mismatch");
  int match = 0;
  for (int i = 0; i < w.size(); ++i) match += w[i] == w_hat[i];
  return static_cast<double>(match) / w.size();
}

double log_binomial_upper_tail(int m, int t) {
  if (t <= 0) return 0.0;
  if (t > m) return -INFINITY;
  const long double log2 = std::log(2.0L);
  long double lmax = -INFINITY;
  std::vector<long double> terms;
  for (int j = t; j <= m; ++j) {
    long double lt = std::lgamma(m + 1.0L) - std::lgamma(j + 1.0L) - std::lgamma(m - j + 1.0L) - m * log2;
    terms.push_back(lt);
    lmax = std::max(lmax, lt);
  }
  long double s = 0;
  for (long double lt : terms) s += std::exp(lt - lmax);
  return static_cast<double>(lmax + std::log(s));
}

DetectionThreshold detection_threshold(int m, double fpr) {
  require(m >= 1, ErrorCode::kInvalidArgument, "detection_threshold: m must be >= 1");
  require(fpr > 0.0 && fpr <= 1.0, ErrorCode::kInvalidArgument, "detection_threshold: fpr must lie in (0,1]");
  DetectionThreshold d;
  d.m = m;
  d.fpr_target = fpr;
  const double log_fpr = std::log(fpr) + 1e-12;
  int t = 0;
  while (t <= m && log_binomial_upper_tail(m, t) > log_fpr) ++t;
  if (t > m) {
    d.reachable = false;
    t = m;
  }
  d.tau_bits = t;
  d.tau_fraction = static_cast<double>(t) / m;
  d.achieved_fpr = std::exp(log_binomial_upper_tail(m, t));
  return d;
}

DetectionThreshold threshold_from_fraction(int m, double tau_fraction) {
  require(m >= 1, ErrorCode::kInvalidArgument, "threshold: m must be >= 1");
  require(tau_fraction >= 0.0 && tau_fraction <= 1.0, ErrorCode::kInvalidArgument, "tau must lie in [0,1]");
  DetectionThreshold d;
  d.m = m;
  d.tau_bits = static_cast<int>(std::ceil(tau_fraction * m - 1e-9));
  d.tau_fraction = tau_fraction;
  d.achieved_fpr = std::exp(log_binomial_upper_tail(m, d.tau_bits));
  d.fpr_target = d.achieved_fpr;
  return d;
}

Residual residual(const ImageTensor& x, const ImageTensor& x_w) {
  require(x.same_shape(x_w), ErrorCode::kDimensionMismatch, "residual: image dimensions differ");
  Residual r;
  r.delta = subtract(x, x_w);
  double sa = 0, s = 0;
  for (double v : r.delta.data()) {
    sa += std::abs(v);
    s += v;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, r.delta.size()));
  r.mean_abs_255 = 255.0 * sa / n;
  r.mean_255 = 255.0 * s / n;
  return r;
}

}  // namespace marksweep
