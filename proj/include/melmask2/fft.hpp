#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "melmask2/errors.hpp"

namespace melmask2 {

// Iterative in-place radix-2 FFT. Sizes in this project are fixed powers of
// two (1024), so no general-size plan machinery is needed.
template <typename T>
void fft_inplace(std::vector<std::complex<T>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw InvalidConfigError("fft size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang =
        (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    const std::complex<T> wlen(static_cast<T>(std::cos(ang)),
                               static_cast<T>(std::sin(ang)));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<T> w(1);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<T> u = a[i + k];
        std::complex<T> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  // Unnormalized in both directions; callers divide by n where needed.
}

}  // namespace melmask2
