#pragma once

// Godard-style blind single-tap equalization of CMT subcarrier streams.
//
// godard_step is the canonical constant-modulus update on the complex
// output. For a single tap that update scales |w| but cannot rotate it
// (the step is a real multiple of w), and the complex modulus of a CMT
// subcarrier output is not constant even when equalized, because the
// quadrature component carries unit-variance ISI/ICI. The dispersion that
// an equalized CMT stream does drive to zero is that of the real part, so
// run_blind_equalizer adapts with godard_step_real_axis, whose stationary
// points sit exactly at w * gain = +-1 (sign ambiguity only).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmtsim {

struct GodardParams {
    int p = 2;                     // dispersion order
    double R = 1.0;                // dispersion constant from godard_R
    double mu = 1e-3;              // step size for unit-power streams
    std::size_t num_iterations = 0; // 0 means run over the whole stream
};

// R = E|s|^{2p} / E|s|^p under a uniform draw from the PAM alphabet.
inline double godard_R(const std::vector<double>& alphabet, int p) {
    if (alphabet.empty()) throw std::invalid_argument("godard_R: empty alphabet");
    if (p < 1) throw std::invalid_argument("godard_R: p must be >= 1");
    double num = 0.0, den = 0.0;
    for (double s : alphabet) {
        const double a = std::pow(std::abs(s), p);
        num += a * a;
        den += a;
    }
    if (den == 0.0) throw std::invalid_argument("godard_R: all-zero alphabet");
    return num / den;
}

// Empirical mean of (|y(n)|^p - R)^2.
inline double godard_cost(const std::vector<std::complex<double>>& y, const GodardParams& params) {
    if (y.empty()) throw std::invalid_argument("godard_cost: empty sequence");
    double acc = 0.0;
    for (const auto& v : y) {
        const double d = std::pow(std::abs(v), params.p) - params.R;
        acc += d * d;
    }
    return acc / static_cast<double>(y.size());
}

// Stochastic-gradient constant-modulus update on the complex output
// (constant factors absorbed into mu). For p = 2:
// w <- w - mu (|y|^2 - R) y conj(u) with y = w u.
inline std::complex<double> godard_step(std::complex<double> w, std::complex<double> u,
                                        const GodardParams& params) {
    const std::complex<double> y = w * u;
    const double ay = std::abs(y);
    if (ay == 0.0) return w;
    const double mod = std::pow(ay, params.p);
    const double shape = (params.p == 2) ? 1.0 : std::pow(ay, params.p - 2);
    return w - params.mu * (mod - params.R) * shape * y * std::conj(u);
}

// Same dispersion taken on the real part, the component that carries the PAM
// symbol: w <- w - mu ((Re y)^2 - R) (Re y) conj(u) for p = 2. Its minima are
// isolated at w * gain = +-1, so the tap acquires phase as well as gain.
inline std::complex<double> godard_step_real_axis(std::complex<double> w, std::complex<double> u,
                                                  const GodardParams& params) {
    const double yr = (w * u).real();
    if (yr == 0.0) return w;
    const double mod = std::pow(std::abs(yr), params.p);
    const double shape = (params.p == 2) ? 1.0 : std::pow(std::abs(yr), params.p - 2);
    return w - params.mu * (mod - params.R) * shape * yr * std::conj(u);
}

struct TapSample {
    std::size_t iteration;
    std::complex<double> w;
    double cost; // instantaneous ((Re y)^p - R)^2 at this step
};

struct BlindEqResult {
    std::complex<double> final_w{1.0, 0.0};
    std::vector<std::complex<double>> equalized; // y(n) = w(n) u(n) before each update
    std::vector<TapSample> trajectory;
    // |w g - (+-1)| with the sign resolved to the better fit; meaningful only
    // when the true flat gain is known.
    double residual_error = 0.0;
};

// Adapts a single tap over the stream with godard_step_real_axis, starting
// from w = 1. true_gain is used only to report residual_error. Aborts with an
// error if |w| exceeds 1e6.
inline BlindEqResult run_blind_equalizer(const std::vector<std::complex<double>>& stream,
                                         std::complex<double> true_gain, const GodardParams& params) {
    if (stream.empty()) throw std::invalid_argument("run_blind_equalizer: empty stream");
    const std::size_t count =
        (params.num_iterations == 0) ? stream.size() : std::min(params.num_iterations, stream.size());

    BlindEqResult res;
    res.equalized.reserve(count);
    res.trajectory.reserve(count);
    std::complex<double> w(1.0, 0.0);
    for (std::size_t n = 0; n < count; ++n) {
        const std::complex<double> y = w * stream[n];
        res.equalized.push_back(y);
        const double disp = std::pow(std::abs(y.real()), params.p) - params.R;
        res.trajectory.push_back({n, w, disp * disp});
        w = godard_step_real_axis(w, stream[n], params);
        if (std::abs(w) > 1e6)
            throw std::runtime_error("run_blind_equalizer: tap diverged (|w| > 1e6); reduce mu");
    }
    res.final_w = w;
    const std::complex<double> wg = w * true_gain;
    res.residual_error = std::min(std::abs(wg - 1.0), std::abs(wg + 1.0));
    return res;
}

// CSV export with columns (iteration, re, im, cost).
inline std::string trajectory_to_csv(const BlindEqResult& res) {
    std::string out = "iteration,re,im,cost\n";
    char buf[120];
    for (const auto& t : res.trajectory) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g\n", t.iteration, t.w.real(),
                      t.w.imag(), t.cost);
        out += buf;
    }
    return out;
}

} // namespace cmtsim
