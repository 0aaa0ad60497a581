#include "marksweep/spectral.hpp"

#include <cmath>

#include "marksweep/fft.hpp"

namespace marksweep {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

Spectrum fft2(const FeatureMap<double>& f) {
  Spectrum F{f.channels, f.height, f.width, std::vector<fft::cd>(f.data.size())};
  const std::size_t plane = f.plane();
  for (int c = 0; c < f.channels; ++c) {
    std::span<fft::cd> p(F.data.data() + c * plane, plane);
    for (std::size_t i = 0; i < plane; ++i) p[i] = f.data[c * plane + i];
    fft::forward2(p, f.height, f.width);
  }
  return F;
}

FeatureMap<double> ifft2_real(const Spectrum& F, double* max_imag) {
  FeatureMap<double> f(F.channels, F.height, F.width);
  const std::size_t plane = f.plane();
  std::vector<fft::cd> buf(plane);
  double worst = 0;
  for (int c = 0; c < F.channels; ++c) {
    std::copy(F.data.begin() + c * plane, F.data.begin() + (c + 1) * plane, buf.begin());
    fft::inverse2(buf, F.height, F.width);
    for (std::size_t i = 0; i < plane; ++i) {
      f.data[c * plane + i] = buf[i].real();
      worst = std::max(worst, std::abs(buf[i].imag()));
    }
  }
  if (max_imag) *max_imag = worst;
  return f;
}

FeatureMap<double> ifft2(const Spectrum& F) { return ifft2_real(F, nullptr); }

double BandThresholds::gamma0() const { return 0.05 + 0.6 * sigmoid(a); }
double BandThresholds::gamma1() const {
  double g0 = gamma0();
  return g0 + (0.95 - g0) * sigmoid(b);
}

BandThresholds BandThresholds::from_gammas(double g0, double g1) {
  require(g0 > 0.05 && g0 < 0.65 && g1 > g0 && g1 < 0.95, ErrorCode::kInvalidArgument,
          "gammas outside the reachable range of the reparameterisation");
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  return BandThresholds{logit((g0 - 0.05) / 0.6), logit((g1 - g0) / (0.95 - g0))};
}

double BandThresholds::dgamma0_da() const {
  double s = sigmoid(a);
  return 0.6 * s * (1 - s);
}
double BandThresholds::dgamma1_da() const { return dgamma0_da() * (1 - sigmoid(b)); }
double BandThresholds::dgamma1_db() const {
  double s = sigmoid(b);
  return (0.95 - gamma0()) * s * (1 - s);
}

RadialMap radial_map(int h, int w) {
  require(h >= 1 && w >= 1, ErrorCode::kInvalidArgument, "radial_map: dims must be >= 1");
  RadialMap R{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  // Signed index k' in [-ceil(n/2)+1, floor(n/2)] divided by floor(n/2).
  auto axis = [](int i, int n) {
    int nyq = n / 2;
    if (nyq == 0) return 0.0;
    int k = i <= nyq ? i : i - n;
    return static_cast<double>(k) / nyq;
  };
  for (int y = 0; y < h; ++y) {
    double u = axis(y, h);
    for (int x = 0; x < w; ++x) {
      double v = axis(x, w);
      R.values[static_cast<std::size_t>(y) * w + x] = std::sqrt(u * u + v * v) / std::sqrt(2.0);
    }
  }
  return R;
}

BandMasks band_masks(const RadialMap& R, const BandThresholds& gamma, double k) {
  const double b[4] = {0.0, gamma.gamma0(), gamma.gamma1(), 1.0};
  BandMasks M;
  M.height = R.height;
  M.width = R.width;
  M.k = k;
  for (int i = 0; i < 3; ++i) {
    M.masks[i].resize(R.values.size());
    for (std::size_t p = 0; p < R.values.size(); ++p) {
      double r = R.values[p];
      M.masks[i][p] = sigmoid(k * (r - b[i])) * sigmoid(k * (b[i + 1] - r));
    }
  }
  return M;
}

Decomposition decompose_with_masks(const FeatureMap<double>& f, const BandMasks& masks,
                                   const std::array<double, 3>& band_weights) {
  require(masks.height == f.height && masks.width == f.width, ErrorCode::kDimensionMismatch,
          "decompose: mask grid does not match feature map");
  Decomposition out;
  DecomposeCache& cache = out.cache;
  cache.channels = f.channels;
  cache.height = f.height;
  cache.width = f.width;
  cache.masks = masks;
  cache.weights = band_weights;
  const std::size_t plane = f.plane();
  cache.spectra.resize(f.channels);
  for (int i = 0; i < 3; ++i) {
    cache.unweighted[i] = FeatureMap<double>(f.channels, f.height, f.width);
    out.bands[i] = FeatureMap<double>(f.channels, f.height, f.width);
  }
  std::vector<fft::cd> buf(plane);
  double worst = 0;
  for (int c = 0; c < f.channels; ++c) {
    auto& F = cache.spectra[c];
    F.resize(plane);
    for (std::size_t p = 0; p < plane; ++p) F[p] = f.data[c * plane + p];
    fft::forward2(F, f.height, f.width);
    for (int i = 0; i < 3; ++i) {
      for (std::size_t p = 0; p < plane; ++p) buf[p] = F[p] * masks.masks[i][p];
      fft::inverse2(buf, f.height, f.width);
      for (std::size_t p = 0; p < plane; ++p) {
        double re = buf[p].real();
        worst = std::max(worst, std::abs(buf[p].imag()));
        cache.unweighted[i].data[c * plane + p] = re;
        out.bands[i].data[c * plane + p] = re * band_weights[i];
      }
    }
  }
  out.max_imag_residue = worst;
  cache.valid = true;
  return out;
}

Decomposition decompose(const FeatureMap<double>& f, const BandThresholds& gamma,
                        const std::array<double, 3>& band_weights) {
  RadialMap R = radial_map(f.height, f.width);
  Decomposition d = decompose_with_masks(f, band_masks(R, gamma), band_weights);
  d.cache.radial = std::move(R);
  d.cache.thresholds = gamma;
  return d;
}

DecomposeGrads decompose_backward(const std::array<FeatureMap<double>, 3>& upstream,
                                  const DecomposeCache& cache) {
  require(cache.valid, ErrorCode::kInvalidArgument, "decompose_backward: missing forward cache");
  for (const auto& g : upstream)
    require(g.channels == cache.channels && g.height == cache.height && g.width == cache.width,
            ErrorCode::kDimensionMismatch, "decompose_backward: upstream shape mismatch");
  const int h = cache.height, w = cache.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double n = static_cast<double>(plane);
  DecomposeGrads out;
  out.df = FeatureMap<double>(cache.channels, h, w);

  // dL/dM_i(u) = (w_i / N) Re(F(u) conj(G_i(u))), summed over channels.
  std::array<std::vector<double>, 3> dmask;
  for (auto& d : dmask) d.assign(plane, 0.0);

  std::vector<fft::cd> acc(plane), G(plane);
  for (int c = 0; c < cache.channels; ++c) {
    std::fill(acc.begin(), acc.end(), fft::cd{});
    const auto& F = cache.spectra[c];
    for (int i = 0; i < 3; ++i) {
      double dw = 0;
      for (std::size_t p = 0; p < plane; ++p) {
        double g = upstream[i].data[c * plane + p];
        dw += g * cache.unweighted[i].data[c * plane + p];
        G[p] = g;
      }
      out.dweights[i] += dw;
      fft::forward2(G, h, w);
      const auto& M = cache.masks.masks[i];
      const double wi = cache.weights[i];
      for (std::size_t p = 0; p < plane; ++p) {
        acc[p] += wi * M[p] * G[p];
        dmask[i][p] += wi / n * (F[p] * std::conj(G[p])).real();
      }
    }
    // Each band operator is self-adjoint (real, symmetric mask), so df = Re F^-1(sum w_i M_i G_i).
    fft::inverse2(acc, h, w);
    for (std::size_t p = 0; p < plane; ++p) out.df.data[c * plane + p] = acc[p].real();
  }

  if (cache.radial.values.empty()) return out;  // explicit masks: no threshold parameters

  const double k = cache.masks.k;
  const double bnd[4] = {0.0, cache.thresholds.gamma0(), cache.thresholds.gamma1(), 1.0};
  double dgamma0 = 0, dgamma1 = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    double r = cache.radial.values[p];
    for (int i = 0; i < 3; ++i) {
      double s1 = sigmoid(k * (r - bnd[i]));
      double s2 = sigmoid(k * (bnd[i + 1] - r));
      double dlo = -k * s1 * (1 - s1) * s2;  // d M_i / d b_i
      double dhi = k * s1 * s2 * (1 - s2);   // d M_i / d b_{i+1}
      double g = dmask[i][p];
      if (i == 1) dgamma0 += g * dlo;
      if (i == 2) dgamma1 += g * dlo;
      if (i == 0) dgamma0 += g * dhi;
      if (i == 1) dgamma1 += g * dhi;
    }
  }
  out.da = dgamma0 * cache.thresholds.dgamma0_da() + dgamma1 * cache.thresholds.dgamma1_da();
  out.db = dgamma1 * cache.thresholds.dgamma1_db();
  return out;
}

}  // namespace marksweep
