#pragma once

#include <array>
#include <vector>

#include "marksweep/fft.hpp"
#include "marksweep/tensor.hpp"

namespace marksweep {

Spectrum fft2(const FeatureMap<double>& f);
FeatureMap<double> ifft2(const Spectrum& F);
/// Inverse transform keeping the imaginary part; max |Im| is written to max_imag.
FeatureMap<double> ifft2_real(const Spectrum& F, double* max_imag);

double sigmoid(double z);

/// Learnable band boundaries. gamma0 = 0.05 + 0.6 sig(a) and
/// gamma1 = gamma0 + (0.95 - gamma0) sig(b), so 0 < gamma0 < gamma1 < 1 for all a, b.
struct BandThresholds {
  double a = 0.0;
  double b = 0.0;

  double gamma0() const;
  double gamma1() const;
  /// Inverse reparameterisation; requires 0.05 < g0 < 0.65 and g0 < g1 < 0.95.
  static BandThresholds from_gammas(double g0, double g1);

  /// Jacobian entries d gamma_i / d (a, b).
  double dgamma0_da() const;
  double dgamma1_da() const;
  double dgamma1_db() const;
};

/// Normalised radial frequency on the unshifted FFT grid (DC at index 0).
struct RadialMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

RadialMap radial_map(int h, int w);

constexpr double kBandSharpness = 10.0;

struct BandMasks {
  int height = 0;
  int width = 0;
  double k = kBandSharpness;
  /// low, mid, high
  std::array<std::vector<double>, 3> masks;
};

/// M_i = sig(k (R - b_i)) * sig(k (b_{i+1} - R)) with boundaries {0, gamma0, gamma1, 1}.
BandMasks band_masks(const RadialMap& R, const BandThresholds& gamma, double k = kBandSharpness);

/// Everything the backward pass needs from a forward decomposition.
struct DecomposeCache {
  int channels = 0, height = 0, width = 0;
  std::vector<std::vector<fft::cd>> spectra;                   // per channel F
  std::array<FeatureMap<double>, 3> unweighted;                // Re(F^-1(F . M_i))
  RadialMap radial;
  BandMasks masks;
  BandThresholds thresholds;
  std::array<double, 3> weights{};
  bool valid = false;
};

struct Decomposition {
  std::array<FeatureMap<double>, 3> bands;  // low, mid, high
  double max_imag_residue = 0.0;
  DecomposeCache cache;
};

/// f_i = Re(F^-1(F(f) . M_i)) * w_i per channel.
Decomposition decompose(const FeatureMap<double>& f, const BandThresholds& gamma,
                        const std::array<double, 3>& band_weights);

/// Same with explicit masks (used by ablations and identity checks); the cache
/// carries no threshold information in that case.
Decomposition decompose_with_masks(const FeatureMap<double>& f, const BandMasks& masks,
                                   const std::array<double, 3>& band_weights);

struct DecomposeGrads {
  FeatureMap<double> df;
  double da = 0.0;
  double db = 0.0;
  std::array<double, 3> dweights{};
};

DecomposeGrads decompose_backward(const std::array<FeatureMap<double>, 3>& upstream,
                                  const DecomposeCache& cache);

}  // namespace marksweep
