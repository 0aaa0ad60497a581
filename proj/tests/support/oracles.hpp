#pragma once
// Independent reference computations. Nothing here calls into the library
// code it is used to check.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

/// Row m of Pascal's triangle, exact in 64-bit for m <= 62.
inline std::vector<std::uint64_t> pascal_row(int m) {
  std::vector<std::uint64_t> row{1};
  for (int i = 1; i <= m; ++i) {
    std::vector<std::uint64_t> next(i + 1, 1);
    for (int j = 1; j < i; ++j) next[j] = row[j - 1] + row[j];
    row.swap(next);
  }
  return row;
}

/// Smallest t with sum_{j>=t} C(m,j) <= fpr_num/fpr_den * 2^m, decided in exact
/// integer arithmetic.
inline int binomial_threshold(int m, std::uint64_t fpr_num, std::uint64_t fpr_den) {
  const auto row = pascal_row(m);
  const unsigned __int128 budget = (static_cast<unsigned __int128>(1) << m) * fpr_num;
  unsigned __int128 tail = 0;
  int t = m + 1;
  for (int j = m; j >= 0; --j) {
    if ((tail + row[j]) * fpr_den > budget) break;
    tail += row[j];
    t = j;
  }
  return t;
}

/// O(N^2) 2-D DFT, forward sign -1, unnormalised.
inline std::vector<std::complex<double>> naive_dft2(const std::vector<std::complex<double>>& a, int h, int w,
                                                    bool inverse = false) {
  const double sgn = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> out(a.size());
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      std::complex<double> acc = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double ph = sgn * 2.0 * std::numbers::pi * (double(u * y) / h + double(v * x) / w);
          acc += a[y * w + x] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
      out[u * w + v] = inverse ? acc / double(h * w) : acc;
    }
  return out;
}

/// Orthonormal 8x8 DCT-II straight from the cosine sum.
inline std::array<double, 64> naive_dct8(const std::array<double, 64>& px) {
  std::array<double, 64> out{};
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
      const double cv = v == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
      double acc = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          acc += px[y * 8 + x] * std::cos((2 * y + 1) * u * std::numbers::pi / 16) *
                 std::cos((2 * x + 1) * v * std::numbers::pi / 16);
      out[u * 8 + v] = cu * cv * acc;
    }
  return out;
}

/// JPEG zig-zag scan (row-major positions), as tabulated in the standard.
inline std::array<int, 64> zigzag() {
  return {0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
          41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
          30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};
}

inline double h2(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

/// Mutual information of a binary symmetric channel with uniform input.
inline double bsc_mi(double p) { return 1.0 - h2(p); }

/// Sample standard deviation.
inline double stddev(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= v.size();
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

}  // namespace oracle

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("marksweep_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil

namespace oracle {

/// Upper tail of the chi-square distribution, via the regularised lower
/// incomplete gamma series (adequate for the small dof used in tests).
inline double chi2_sf(double x, int dof) {
  const double s = dof / 2.0, z = x / 2.0;
  if (z <= 0) return 1.0;
  double term = 1.0 / s, sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= z / (s + n);
    sum += term;
    if (term < sum * 1e-16) break;
  }
  const double lower = std::exp(s * std::log(z) - z - std::lgamma(s)) * sum;
  return 1.0 - lower;
}

}  // namespace oracle
