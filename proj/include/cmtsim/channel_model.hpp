#pragma once

// Multi-user, multi-antenna tapped-delay-line channels: SUI-4 Rayleigh
// realizations, flat single-tap channels for detector tests, per-subcarrier
// gain evaluation, and channel application with AWGN.
//
// Every (user, antenna) link draws from its own derived seed, so a
// realization with N antennas is exactly the first N antennas of a
// realization with more antennas under the same seed (and likewise for
// users). Antenna noise streams are seeded the same way.

#include "cmtsim/cmt_modem.hpp"
#include "cmtsim/rng.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmtsim {

struct ChannelSet {
    int num_users = 0;    // K
    int num_antennas = 0; // N
    int max_delay = 0;    // taps span delays 0..max_delay
    double sample_rate_hz = 1.0;
    // impulse_responses[l * N + i] is the length (max_delay + 1) response of link (l, i)
    std::vector<std::vector<std::complex<double>>> impulse_responses;
    // ensemble power-delay profile the realization was drawn from
    std::vector<double> expected_power;

    const std::vector<std::complex<double>>& link(int l, int i) const {
        return impulse_responses[static_cast<std::size_t>(l) * num_antennas + i];
    }
};

// Per-complex-sample AWGN variance; real/imag parts are i.i.d. with variance/2 each.
struct NoiseSpec {
    double variance = 0.0;
};

// SUI-4 omni profile: delays {0, 1.5, 4} us, relative powers {0, -4, -8} dB,
// Ricean K-factor 0 (pure Rayleigh), no Doppler, taps i.i.d. across links,
// total expected power 1 per link.
inline ChannelSet realize_sui4(int K, int N, double fs, std::uint64_t seed) {
    if (K < 1 || N < 1) throw std::invalid_argument("realize_sui4: K and N must be >= 1");
    if (fs <= 0.0) throw std::invalid_argument("realize_sui4: fs must be positive");

    const double delay_us[3] = {0.0, 1.5e-6, 4.0e-6};
    const double rel_db[3] = {0.0, -4.0, -8.0};
    int delays[3];
    double pw[3];
    double total = 0.0;
    for (int t = 0; t < 3; ++t) {
        delays[t] = static_cast<int>(std::lround(delay_us[t] * fs));
        pw[t] = std::pow(10.0, rel_db[t] / 10.0);
        total += pw[t];
    }
    for (double& v : pw) v /= total;
    if (delays[2] > 1 << 20) throw std::invalid_argument("realize_sui4: delay spread too long at this fs");

    ChannelSet ch;
    ch.num_users = K;
    ch.num_antennas = N;
    ch.max_delay = delays[2];
    ch.sample_rate_hz = fs;
    ch.expected_power.assign(static_cast<std::size_t>(ch.max_delay) + 1, 0.0);
    for (int t = 0; t < 3; ++t) ch.expected_power[delays[t]] += pw[t];

    ch.impulse_responses.resize(static_cast<std::size_t>(K) * N);
    for (int l = 0; l < K; ++l) {
        const std::uint64_t user_seed = derive_seed(seed, static_cast<std::uint64_t>(l));
        for (int i = 0; i < N; ++i) {
            Rng rng(derive_seed(user_seed, static_cast<std::uint64_t>(i)));
            auto& h = ch.impulse_responses[static_cast<std::size_t>(l) * N + i];
            h.assign(static_cast<std::size_t>(ch.max_delay) + 1, {0.0, 0.0});
            for (int t = 0; t < 3; ++t) {
                const double s = std::sqrt(pw[t] / 2.0);
                const double re = s * rng.gaussian();
                const double im = s * rng.gaussian();
                h[delays[t]] += std::complex<double>(re, im);
            }
        }
    }
    return ch;
}

// Single circularly-symmetric unit-power Gaussian tap per link.
inline ChannelSet flat_random(int K, int N, std::uint64_t seed) {
    if (K < 1 || N < 1) throw std::invalid_argument("flat_random: K and N must be >= 1");
    ChannelSet ch;
    ch.num_users = K;
    ch.num_antennas = N;
    ch.max_delay = 0;
    ch.expected_power = {1.0};
    ch.impulse_responses.resize(static_cast<std::size_t>(K) * N);
    for (int l = 0; l < K; ++l) {
        const std::uint64_t user_seed = derive_seed(seed, static_cast<std::uint64_t>(l));
        for (int i = 0; i < N; ++i) {
            Rng rng(derive_seed(user_seed, static_cast<std::uint64_t>(i)));
            ch.impulse_responses[static_cast<std::size_t>(l) * N + i] = {rng.gaussian_complex_unit()};
        }
    }
    return ch;
}

inline ChannelSet identity_channel(int K, int N) {
    if (K < 1 || N < 1) throw std::invalid_argument("identity_channel: K and N must be >= 1");
    ChannelSet ch;
    ch.num_users = K;
    ch.num_antennas = N;
    ch.max_delay = 0;
    ch.expected_power = {1.0};
    ch.impulse_responses.assign(static_cast<std::size_t>(K) * N, {std::complex<double>(1.0, 0.0)});
    return ch;
}

// Symbol-timing reference: the mean excess delay of the ensemble power-delay
// profile, rounded to the nearest sample.
inline int timing_reference(const ChannelSet& ch) {
    double num = 0.0, den = 0.0;
    for (std::size_t d = 0; d < ch.expected_power.size(); ++d) {
        num += static_cast<double>(d) * ch.expected_power[d];
        den += ch.expected_power[d];
    }
    if (den <= 0.0) return 0;
    return static_cast<int>(std::lround(num / den));
}

// Flat per-subcarrier gains, user-major per subcarrier:
// gains.at(k, i, l) = sum_d h_{l,i}(d) exp(-j 2 pi (k + bin_offset) d / L).
// CMT centers use bin_offset = 0.5; the OFDM baseline uses 0.
struct SubcarrierGains {
    int L = 0, N = 0, K = 0;
    std::vector<std::complex<double>> v;
    std::complex<double>& at(int k, int i, int l) {
        return v[(static_cast<std::size_t>(k) * N + i) * K + l];
    }
    std::complex<double> at(int k, int i, int l) const {
        return v[(static_cast<std::size_t>(k) * N + i) * K + l];
    }
};

inline SubcarrierGains subcarrier_gains(const ChannelSet& ch, int L, double bin_offset = 0.5) {
    SubcarrierGains g;
    g.L = L;
    g.N = ch.num_antennas;
    g.K = ch.num_users;
    g.v.assign(static_cast<std::size_t>(L) * g.N * g.K, {0.0, 0.0});
    for (int k = 0; k < L; ++k) {
        for (int l = 0; l < g.K; ++l) {
            for (int i = 0; i < g.N; ++i) {
                const auto& h = ch.link(l, i);
                std::complex<double> acc(0.0, 0.0);
                for (std::size_t d = 0; d < h.size(); ++d) {
                    if (h[d] == std::complex<double>(0.0, 0.0)) continue;
                    acc += h[d] * std::polar(1.0, -2.0 * std::numbers::pi * (k + bin_offset) *
                                                       static_cast<double>(d) / L);
                }
                g.at(k, i, l) = acc;
            }
        }
    }
    return g;
}

// Antenna i output = sum_l (h_{l,i} convolved with signal_l) + AWGN.
// Output length = input length + max_delay (full linear convolution).
inline std::vector<BasebandSignal> apply_channel(const std::vector<BasebandSignal>& per_user,
                                                 const ChannelSet& ch, const NoiseSpec& noise,
                                                 std::uint64_t noise_seed) {
    if (static_cast<int>(per_user.size()) != ch.num_users)
        throw std::invalid_argument("apply_channel: signal count does not match channel users");
    if (noise.variance < 0.0) throw std::invalid_argument("apply_channel: negative noise variance");
    const std::size_t in_len = per_user.empty() ? 0 : per_user[0].samples.size();
    for (const auto& s : per_user)
        if (s.samples.size() != in_len) throw std::invalid_argument("apply_channel: user signal lengths differ");

    const std::size_t out_len = in_len + static_cast<std::size_t>(ch.max_delay);
    std::vector<BasebandSignal> out(static_cast<std::size_t>(ch.num_antennas));
    for (int i = 0; i < ch.num_antennas; ++i) {
        auto& y = out[i].samples;
        out[i].sample_rate_hz = per_user.empty() ? ch.sample_rate_hz : per_user[0].sample_rate_hz;
        y.assign(out_len, {0.0, 0.0});
        for (int l = 0; l < ch.num_users; ++l) {
            const auto& h = ch.link(l, i);
            const auto& x = per_user[l].samples;
            for (std::size_t d = 0; d < h.size(); ++d) {
                if (h[d] == std::complex<double>(0.0, 0.0)) continue;
                const std::complex<double> tap = h[d];
                for (std::size_t m = 0; m < in_len; ++m) y[m + d] += tap * x[m];
            }
        }
        if (noise.variance > 0.0) {
            Rng rng(derive_seed(noise_seed, static_cast<std::uint64_t>(i)));
            const double s = std::sqrt(noise.variance / 2.0);
            for (auto& sample : y)
                sample += std::complex<double>(s * rng.gaussian(), s * rng.gaussian());
        }
    }
    return out;
}

// CSV with columns (user, antenna, delay_samples, re, im), one row per stored
// tap. Import rebuilds the tap matrix; the ensemble profile is re-estimated
// from mean tap power per delay, which matters only for timing_reference.
inline std::string channel_to_csv(const ChannelSet& ch) {
    std::string out = "user,antenna,delay_samples,re,im\n";
    char buf[96];
    for (int l = 0; l < ch.num_users; ++l)
        for (int i = 0; i < ch.num_antennas; ++i) {
            const auto& h = ch.link(l, i);
            for (std::size_t d = 0; d < h.size(); ++d) {
                if (h[d] == std::complex<double>(0.0, 0.0) && ch.expected_power[d] == 0.0) continue;
                std::snprintf(buf, sizeof(buf), "%d,%d,%zu,%.17g,%.17g\n", l, i, d,
                              h[d].real(), h[d].imag());
                out += buf;
            }
        }
    return out;
}

inline ChannelSet channel_from_csv(const std::string& text, double fs) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("channel_from_csv: empty input");

    struct Row {
        int l, i, d;
        std::complex<double> tap;
    };
    std::vector<Row> rows;
    int max_l = -1, max_i = -1, max_d = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row r;
        double re, im;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%lg,%lg", &r.l, &r.i, &r.d, &re, &im) != 5)
            throw std::runtime_error("channel_from_csv: malformed row: " + line);
        r.tap = {re, im};
        rows.push_back(r);
        max_l = std::max(max_l, r.l);
        max_i = std::max(max_i, r.i);
        max_d = std::max(max_d, r.d);
    }
    if (rows.empty()) throw std::runtime_error("channel_from_csv: no tap rows");

    ChannelSet ch;
    ch.num_users = max_l + 1;
    ch.num_antennas = max_i + 1;
    ch.max_delay = max_d;
    ch.sample_rate_hz = fs;
    ch.impulse_responses.assign(static_cast<std::size_t>(ch.num_users) * ch.num_antennas,
                                std::vector<std::complex<double>>(static_cast<std::size_t>(max_d) + 1,
                                                                  {0.0, 0.0}));
    ch.expected_power.assign(static_cast<std::size_t>(max_d) + 1, 0.0);
    for (const auto& r : rows) {
        ch.impulse_responses[static_cast<std::size_t>(r.l) * ch.num_antennas + r.i][r.d] = r.tap;
        ch.expected_power[r.d] += std::norm(r.tap);
    }
    const double links = static_cast<double>(ch.num_users) * ch.num_antennas;
    for (double& v : ch.expected_power) v /= links;
    return ch;
}

} // namespace cmtsim
