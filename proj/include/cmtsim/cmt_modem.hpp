#pragma once

// CMT synthesis/analysis transmultiplexer and a CP-OFDM baseline modem.
//
// CMT places L vestigial-sideband subcarriers at f_k = (k + 1/2) fs / L and
// sends real PAM symbols every L/2 samples with the j^(k+n) phase toggle, so
// adjacent subcarriers and symbols sit in phase quadrature. cmt_modulate and
// cmt_demodulate are the direct per-subcarrier convolution reference path;
// the *_fast variants are polyphase/FFT implementations (power-of-two L)
// that must agree with the reference to 1e-9.

#include "cmtsim/fft.hpp"
#include "cmtsim/prototype_filter.hpp"
#include "cmtsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace cmtsim {

struct RealGrid {
    int rows = 0, cols = 0;
    std::vector<double> v;
    RealGrid() = default;
    RealGrid(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

struct ComplexGrid {
    int rows = 0, cols = 0;
    std::vector<std::complex<double>> v;
    ComplexGrid() = default;
    ComplexGrid(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c) {}
    std::complex<double>& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::complex<double> at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

// Real PAM payload, subcarrier-major: symbols.at(k, n).
struct PamGrid {
    RealGrid symbols;
    std::vector<double> alphabet;
};

struct BasebandSignal {
    std::vector<std::complex<double>> samples;
    double sample_rate_hz = 1.0;
};

// Demodulated subcarrier outputs y_k(n); real part carries the PAM symbol,
// imaginary part the residual ISI/ICI term.
using SubcarrierOutputs = ComplexGrid;

// Zero-mean unit-power PAM levels {+-1, +-3, ...}.
inline std::vector<double> pam_alphabet(int levels) {
    if (levels < 2 || levels % 2 != 0) throw std::invalid_argument("pam_alphabet: levels must be even and >= 2");
    const double scale = std::sqrt(3.0 / (static_cast<double>(levels) * levels - 1.0));
    std::vector<double> a;
    for (int i = -(levels - 1); i <= levels - 1; i += 2) a.push_back(i * scale);
    return a;
}

inline PamGrid random_pam_grid(int L, int T, const std::vector<double>& alphabet, Rng& rng) {
    PamGrid g;
    g.alphabet = alphabet;
    g.symbols = RealGrid(L, T);
    for (int k = 0; k < L; ++k)
        for (int n = 0; n < T; ++n) g.symbols.at(k, n) = rng.pick(alphabet);
    return g;
}

namespace detail {

// j^m for m possibly negative.
inline std::complex<double> jpow(long long m) {
    switch (((m % 4) + 4) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, -1.0};
    }
}

// exp(j 2 pi (k + 1/2) m / L) for m = 0..2L-1; period 2L in m.
inline std::vector<std::complex<double>> carrier_table(int k, int L) {
    std::vector<std::complex<double>> t(2 * static_cast<std::size_t>(L));
    for (int m = 0; m < 2 * L; ++m)
        t[m] = std::polar(1.0, 2.0 * std::numbers::pi * (k + 0.5) * m / L);
    return t;
}

} // namespace detail

inline std::size_t cmt_signal_length(int L, int T, const PrototypeFilter& proto) {
    return static_cast<std::size_t>(T - 1) * (L / 2) + proto.coefficients.size();
}

// Direct-path synthesis. Output length (T-1) L/2 + len(proto).
inline BasebandSignal cmt_modulate(const PamGrid& grid, const PrototypeFilter& proto) {
    const int L = grid.symbols.rows;
    const int T = grid.symbols.cols;
    if (L != proto.num_subcarriers) throw std::invalid_argument("cmt_modulate: grid/prototype subcarrier mismatch");
    const auto& p = proto.coefficients;
    const int n_taps = static_cast<int>(p.size());
    const int D = L / 2;

    BasebandSignal sig;
    sig.samples.assign(cmt_signal_length(L, T, proto), {0.0, 0.0});
    for (int k = 0; k < L; ++k) {
        const auto carrier = detail::carrier_table(k, L);
        for (int n = 0; n < T; ++n) {
            const std::complex<double> c = grid.symbols.at(k, n) * detail::jpow(k + n);
            if (c == std::complex<double>(0.0, 0.0)) continue;
            const std::size_t base = static_cast<std::size_t>(n) * D;
            for (int i = 0; i < n_taps; ++i)
                sig.samples[base + i] += c * p[i] * carrier[(base + i) % (2 * L)];
        }
    }
    return sig;
}

// Direct-path analysis: down-convert, matched-filter, sample at n L/2 plus the
// filter group delay, and strip the j^(k+n) phase. Equalization and real-part
// extraction are left to the caller.
inline SubcarrierOutputs cmt_demodulate(const BasebandSignal& signal, const PrototypeFilter& proto,
                                        int L, int T) {
    if (L != proto.num_subcarriers) throw std::invalid_argument("cmt_demodulate: L/prototype mismatch");
    if (T < 1) throw std::invalid_argument("cmt_demodulate: T must be positive");
    const auto& p = proto.coefficients;
    const int n_taps = static_cast<int>(p.size());
    const int D = L / 2;
    if (signal.samples.size() < cmt_signal_length(L, T, proto))
        throw std::invalid_argument("cmt_demodulate: signal too short for requested T");

    SubcarrierOutputs out(L, T);
    for (int k = 0; k < L; ++k) {
        const auto carrier = detail::carrier_table(k, L);
        for (int n = 0; n < T; ++n) {
            const std::size_t base = static_cast<std::size_t>(n) * D;
            std::complex<double> acc(0.0, 0.0);
            for (int i = 0; i < n_taps; ++i)
                acc += signal.samples[base + i] * std::conj(carrier[(base + i) % (2 * L)]) * p[i];
            out.at(k, n) = acc * detail::jpow(-(k + n));
        }
    }
    return out;
}

// Polyphase synthesis, one length-L inverse DFT per symbol. Power-of-two L.
inline BasebandSignal cmt_modulate_fast(const PamGrid& grid, const PrototypeFilter& proto) {
    const int L = grid.symbols.rows;
    const int T = grid.symbols.cols;
    if (L != proto.num_subcarriers) throw std::invalid_argument("cmt_modulate_fast: grid/prototype subcarrier mismatch");
    if (!is_power_of_two(static_cast<std::size_t>(L))) return cmt_modulate(grid, proto);
    const auto& p = proto.coefficients;
    const int n_taps = static_cast<int>(p.size());
    const int D = L / 2;

    std::vector<std::complex<double>> half_bin(2 * static_cast<std::size_t>(L));
    for (int m = 0; m < 2 * L; ++m)
        half_bin[m] = std::polar(1.0, std::numbers::pi * m / L);

    BasebandSignal sig;
    sig.samples.assign(cmt_signal_length(L, T, proto), {0.0, 0.0});
    std::vector<std::complex<double>> f(static_cast<std::size_t>(L));
    for (int n = 0; n < T; ++n) {
        for (int k = 0; k < L; ++k) f[k] = grid.symbols.at(k, n) * detail::jpow(k + n);
        ifft_inplace_unnormalized(f);
        const std::size_t base = static_cast<std::size_t>(n) * D;
        for (int i = 0; i < n_taps; ++i) {
            const std::size_t g = base + i;
            sig.samples[g] += p[i] * half_bin[g % (2 * L)] * f[g % L];
        }
    }
    return sig;
}

// Polyphase analysis, one length-L DFT per symbol. Power-of-two L.
inline SubcarrierOutputs cmt_demodulate_fast(const BasebandSignal& signal, const PrototypeFilter& proto,
                                             int L, int T) {
    if (L != proto.num_subcarriers) throw std::invalid_argument("cmt_demodulate_fast: L/prototype mismatch");
    if (!is_power_of_two(static_cast<std::size_t>(L))) return cmt_demodulate(signal, proto, L, T);
    const auto& p = proto.coefficients;
    const int n_taps = static_cast<int>(p.size());
    const int D = L / 2;
    if (signal.samples.size() < cmt_signal_length(L, T, proto))
        throw std::invalid_argument("cmt_demodulate_fast: signal too short for requested T");

    std::vector<std::complex<double>> window(static_cast<std::size_t>(n_taps));
    for (int i = 0; i < n_taps; ++i)
        window[i] = std::polar(p[i], -std::numbers::pi * i / L);

    SubcarrierOutputs out(L, T);
    std::vector<std::complex<double>> fold(static_cast<std::size_t>(L));
    for (int n = 0; n < T; ++n) {
        const std::size_t base = static_cast<std::size_t>(n) * D;
        std::fill(fold.begin(), fold.end(), std::complex<double>(0.0, 0.0));
        for (int i = 0; i < n_taps; ++i)
            fold[i % L] += signal.samples[base + i] * window[i];
        fft_inplace(fold);
        // (-j)^n from the half-sample carrier offset, (-1)^(k n) from the L/2 hop.
        const std::complex<double> rot_n = detail::jpow(-n);
        for (int k = 0; k < L; ++k) {
            const double sgn = ((k & 1) && (n & 1)) ? -1.0 : 1.0;
            out.at(k, n) = fold[k] * rot_n * sgn * detail::jpow(-(k + n));
        }
    }
    return out;
}

inline std::size_t ofdm_signal_length(int L, int cp_len, int T) {
    return static_cast<std::size_t>(T) * (L + cp_len);
}

// Unitary-DFT CP-OFDM synthesis of an L x T complex QAM grid.
inline BasebandSignal ofdm_modulate(const ComplexGrid& grid, int L, int cp_len) {
    if (grid.rows != L) throw std::invalid_argument("ofdm_modulate: grid/L mismatch");
    if (cp_len < 0) throw std::invalid_argument("ofdm_modulate: cp_len must be >= 0");
    if (!is_power_of_two(static_cast<std::size_t>(L))) throw std::invalid_argument("ofdm_modulate: L must be a power of two");
    const int T = grid.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(L));

    BasebandSignal sig;
    sig.samples.assign(ofdm_signal_length(L, cp_len, T), {0.0, 0.0});
    std::vector<std::complex<double>> f(static_cast<std::size_t>(L));
    for (int n = 0; n < T; ++n) {
        for (int k = 0; k < L; ++k) f[k] = grid.at(k, n);
        ifft_inplace_unnormalized(f);
        const std::size_t base = static_cast<std::size_t>(n) * (L + cp_len);
        for (int i = 0; i < cp_len; ++i) sig.samples[base + i] = scale * f[L - cp_len + i];
        for (int i = 0; i < L; ++i) sig.samples[base + cp_len + i] = scale * f[i];
    }
    return sig;
}

inline ComplexGrid ofdm_demodulate(const BasebandSignal& signal, int L, int cp_len, int T) {
    if (cp_len < 0) throw std::invalid_argument("ofdm_demodulate: cp_len must be >= 0");
    if (!is_power_of_two(static_cast<std::size_t>(L))) throw std::invalid_argument("ofdm_demodulate: L must be a power of two");
    if (signal.samples.size() < ofdm_signal_length(L, cp_len, T))
        throw std::invalid_argument("ofdm_demodulate: signal too short for requested T");
    const double scale = 1.0 / std::sqrt(static_cast<double>(L));

    ComplexGrid out(L, T);
    std::vector<std::complex<double>> f(static_cast<std::size_t>(L));
    for (int n = 0; n < T; ++n) {
        const std::size_t base = static_cast<std::size_t>(n) * (L + cp_len) + cp_len;
        for (int i = 0; i < L; ++i) f[i] = signal.samples[base + i];
        fft_inplace(f);
        for (int k = 0; k < L; ++k) out.at(k, n) = scale * f[k];
    }
    return out;
}

} // namespace cmtsim
