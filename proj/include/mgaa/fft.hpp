#pragma once

#include <complex>
#include <vector>

#include "mgaa/common.hpp"

namespace mgaa {

// In-place iterative radix-2 FFT. Sizes are small powers of two (1024 for the
// STFT path), so no plan caching is needed beyond the twiddle table.
inline void fft_inplace(std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  require(n > 0 && (n & (n - 1)) == 0, "FFT size must be a power of two, got ", n);

  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -kTwoPi / double(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace mgaa
