#include "marksweep/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "marksweep/error.hpp"

namespace marksweep::fft {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

const Plan& cached_plan(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Plan>> plans;
  std::lock_guard lock(mu);
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<Plan>(n);
  return *slot;
}

}  // namespace

Plan::Plan(int n) : n_(n), m_(n) {
  require(n >= 1, ErrorCode::kInvalidArgument, "fft length must be >= 1");
  if (is_pow2(n)) {
    twiddle_.resize(n / 2 + 1);
    for (int k = 0; k <= n / 2; ++k) twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
    return;
  }
  m_ = 1;
  while (m_ < 2 * n - 1) m_ <<= 1;
  inner_ = std::make_unique<Plan>(m_);
  chirp_.resize(n);
  for (int k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for large n.
    long long kk = (static_cast<long long>(k) * k) % (2LL * n);
    chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(kk) / n);
  }
  chirp_fft_.assign(m_, cd{});
  chirp_fft_[0] = std::conj(chirp_[0]);
  for (int k = 1; k < n; ++k) chirp_fft_[k] = chirp_fft_[m_ - k] = std::conj(chirp_[k]);
  inner_->execute(chirp_fft_, false);
}

void Plan::radix2(std::span<cd> a, bool inverse) const {
  const int n = n_;
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const int step = n / len;
    for (int i = 0; i < n; i += len)
      for (int k = 0; k < len / 2; ++k) {
        cd wk = twiddle_[k * step];
        if (inverse) wk = std::conj(wk);
        cd u = a[i + k], v = a[i + k + len / 2] * wk;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
  }
}

void Plan::execute(std::span<cd> data, bool inverse) const {
  if (n_ == 1) return;
  if (!inner_) {
    radix2(data, inverse);
    return;
  }
  // Bluestein: X_k = conj(c_k) ... expressed via a length-m circular convolution.
  std::vector<cd> a(m_, cd{});
  for (int k = 0; k < n_; ++k) {
    cd c = inverse ? std::conj(chirp_[k]) : chirp_[k];
    a[k] = data[k] * c;
  }
  inner_->execute(a, false);
  for (int k = 0; k < m_; ++k) {
    cd b = inverse ? std::conj(chirp_fft_[(m_ - k) % m_]) : chirp_fft_[k];
    a[k] *= b;
  }
  inner_->execute(a, true);
  const double scale = 1.0 / m_;
  for (int k = 0; k < n_; ++k) {
    cd c = inverse ? std::conj(chirp_[k]) : chirp_[k];
    data[k] = a[k] * scale * c;
  }
}

namespace {

void transform2(std::span<cd> data, int h, int w, bool inverse) {
  require(static_cast<std::size_t>(h) * w == data.size(), ErrorCode::kDimensionMismatch, "fft2 size mismatch");
  const Plan& row = cached_plan(w);
  for (int y = 0; y < h; ++y) row.execute(data.subspan(static_cast<std::size_t>(y) * w, w), inverse);
  const Plan& col = cached_plan(h);
  std::vector<cd> buf(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) buf[y] = data[static_cast<std::size_t>(y) * w + x];
    col.execute(buf, inverse);
    for (int y = 0; y < h; ++y) data[static_cast<std::size_t>(y) * w + x] = buf[y];
  }
}

}  // namespace

void forward2(std::span<cd> data, int h, int w) { transform2(data, h, w, false); }

void inverse2(std::span<cd> data, int h, int w) {
  transform2(data, h, w, true);
  const double scale = 1.0 / (static_cast<double>(h) * w);
  for (auto& v : data) v *= scale;
}

}  // namespace marksweep::fft
