#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

namespace marksweep::fft {

using cd = std::complex<double>;

/// In-place 1-D DFT of fixed length: radix-2 for powers of two, Bluestein otherwise.
class Plan {
 public:
  explicit Plan(int n);
  int size() const { return n_; }
  /// Unnormalised forward (sign -1) or inverse (sign +1, no 1/n) transform.
  void execute(std::span<cd> data, bool inverse) const;

 private:
  void radix2(std::span<cd> data, bool inverse) const;
  int n_;
  int m_;                    // padded power-of-two length for Bluestein
  std::vector<cd> twiddle_;  // radix-2 twiddles for the working length
  std::vector<cd> chirp_;
  std::vector<cd> chirp_fft_;
  std::unique_ptr<Plan> inner_;
};

/// 2-D transform of an h x w row-major complex array. Forward is unnormalised,
/// inverse scales by 1/(h w).
void forward2(std::span<cd> data, int h, int w);
void inverse2(std::span<cd> data, int h, int w);

}  // namespace marksweep::fft
