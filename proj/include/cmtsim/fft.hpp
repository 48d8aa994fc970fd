#pragma once

// Minimal iterative radix-2 FFT used by the fast modem paths.
// Power-of-two sizes only; callers fall back to direct evaluation otherwise.

#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace cmtsim {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

} // namespace detail

// Forward DFT: X[k] = sum_n x[n] exp(-j 2 pi k n / N). Size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) { detail::fft_radix2(a, false); }

// Unnormalized inverse DFT: x[n] = sum_k X[k] exp(+j 2 pi k n / N).
// Divide by size() for the unitary-pair convention.
inline void ifft_inplace_unnormalized(std::vector<std::complex<double>>& a) {
    detail::fft_radix2(a, true);
}

} // namespace cmtsim
