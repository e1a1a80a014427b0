#pragma once

// Iterative radix-2 Cooley-Tukey transform.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "voxworld/error.hpp"

namespace voxworld {

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place forward DFT, X[k] = sum_n x[n] e^{-2 pi i k n / N}.
template <typename Real>
void fft_inplace(std::span<std::complex<Real>> x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) {
    throw Error(ErrorCode::NonPowerOfTwoFrame,
                "FFT length " + std::to_string(n) + " is not a power of two", "frame_size");
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles are evaluated directly rather than by recurrence; the
      // recurrence drifts by ~1e-13 at N=1024 which is visible in oracle checks.
      const Real angle = -2 * std::numbers::pi_v<Real> * static_cast<Real>(k) /
                         static_cast<Real>(len);
      const std::complex<Real> w(std::cos(angle), std::sin(angle));
      for (std::size_t start = 0; start < n; start += len) {
        auto& a = x[start + k];
        auto& b = x[start + k + half];
        const auto t = w * b;
        b = a - t;
        a = a + t;
      }
    }
  }
}

/// Magnitudes of bins 0..N/2 of a real frame.
template <typename Real>
std::vector<Real> magnitude_spectrum(std::span<const Real> frame) {
  std::vector<std::complex<Real>> buf(frame.begin(), frame.end());
  fft_inplace<Real>(buf);
  std::vector<Real> mag(frame.size() / 2 + 1);
  for (std::size_t j = 0; j < mag.size(); ++j) mag[j] = std::abs(buf[j]);
  return mag;
}

}  // namespace voxworld
