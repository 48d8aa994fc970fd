#pragma once

// Square-root Nyquist prototype lowpass design for the CMT filter bank.
//
// The coefficient sequence starts from the frequency-sampled square-root
// raised-cosine with roll-off 1 and is then refined by a damped
// Levenberg-Marquardt pass that drives every round-trip real-axis leakage
// term toward zero: the Nyquist crossings of the self-convolution plus the
// real-axis projections of the even-shift cross-ambiguity samples, under
// even symmetry and unit energy. The refinement is deterministic.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmtsim {

struct PrototypeFilter {
    std::vector<double> coefficients; // length O*L + 1, even-symmetric, unit energy
    int num_subcarriers = 0;          // L
    int overlap_factor = 0;           // O
};

// Full linear self-convolution g = f * f.
inline std::vector<double> self_convolve(const std::vector<double>& f) {
    const std::size_t n = f.size();
    std::vector<double> g(2 * n - 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i + j] += f[i] * f[j];
    return g;
}

// Max |g(center + mL)| over nonzero m after normalizing the center tap to 1.
// Bounds the back-to-back ISI of a matched-filter pair built from f.
inline double nyquist_residual(const std::vector<double>& coeffs, int L) {
    if (coeffs.empty() || L < 1) throw std::invalid_argument("nyquist_residual: empty filter or L < 1");
    const std::vector<double> g = self_convolve(coeffs);
    const std::size_t c = coeffs.size() - 1;
    const double center = g[c];
    if (center == 0.0) throw std::invalid_argument("nyquist_residual: zero center tap");
    double worst = 0.0;
    for (std::size_t m = 1; c + m * static_cast<std::size_t>(L) < g.size(); ++m)
        worst = std::max(worst, std::abs(g[c + m * L] / center));
    return worst;
}

inline double nyquist_residual(const PrototypeFilter& f) {
    return nyquist_residual(f.coefficients, f.num_subcarriers);
}

namespace detail {

inline std::vector<double> freq_sampled_srrc(int L, int O) {
    const int n = O * L + 1;
    const int mid = O * L / 2;
    std::vector<double> p(n, 1.0);
    for (int i = 1; i < O; ++i) {
        const double a = 2.0 * std::cos(std::numbers::pi * i / (2.0 * O));
        for (int m = 0; m < n; ++m)
            p[m] += a * std::cos(2.0 * std::numbers::pi * i * (m - mid) / (O * static_cast<double>(L)));
    }
    double e = 0.0;
    for (double v : p) e += v * v;
    const double s = 1.0 / std::sqrt(e);
    for (double& v : p) v *= s;
    return p;
}

// Residual vector of the leakage objective; zero means a perfect round trip.
inline Eigen::VectorXd leakage_residuals(const std::vector<double>& p, int L, int O) {
    const int n = static_cast<int>(p.size());
    const int c = n - 1;
    const std::vector<double> g = self_convolve(p);

    std::vector<double> r;
    for (int m = 1; m <= O; ++m) r.push_back(g[c + m * L]);

    for (int dk = 2; dk <= L / 2; dk += 2) {
        const double w = 2.0 * std::numbers::pi * dk / L;
        // Positive and negative dk both occur unless dk sits at the band edge.
        const double wt = (dk == L / 2) ? 1.0 : std::numbers::sqrt2;
        for (int dn = -2 * O; dn <= 2 * O; dn += 2) {
            const int d = dn * (L / 2);
            const int i0 = std::max(0, d);
            const int i1 = std::min(n - 1, n - 1 + d);
            if (i0 > i1) continue;
            std::complex<double> acc(0.0, 0.0);
            for (int i = i0; i <= i1; ++i)
                acc += std::polar(p[i - d] * p[i], w * i);
            r.push_back(wt * acc.real());
            r.push_back(wt * acc.imag());
        }
    }

    double e = 0.0;
    for (double v : p) e += v * v;
    r.push_back(e - 1.0);

    return Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
}

// Jacobian of leakage_residuals with respect to the symmetric half of p
// (columns folded by p[a] = p[n-1-a]).
inline Eigen::MatrixXd leakage_jacobian(const std::vector<double>& p, int L, int O) {
    const int n = static_cast<int>(p.size());
    const int c = n - 1;
    const int half = (n + 1) / 2;

    std::vector<Eigen::VectorXd> rows;
    auto fold = [&](const Eigen::VectorXd& full) {
        Eigen::VectorXd h(half);
        for (int a = 0; a < half; ++a)
            h[a] = full[a] + ((n - 1 - a != a) ? full[n - 1 - a] : 0.0);
        return h;
    };

    for (int m = 1; m <= O; ++m) {
        const int i = c + m * L;
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        const int lo = std::max(0, i - (n - 1));
        const int hi = std::min(n - 1, i);
        for (int a = lo; a <= hi; ++a) row[a] = 2.0 * p[i - a];
        rows.push_back(fold(row));
    }

    for (int dk = 2; dk <= L / 2; dk += 2) {
        const double w = 2.0 * std::numbers::pi * dk / L;
        const double wt = (dk == L / 2) ? 1.0 : std::numbers::sqrt2;
        for (int dn = -2 * O; dn <= 2 * O; dn += 2) {
            const int d = dn * (L / 2);
            if (std::max(0, d) > std::min(n - 1, n - 1 + d)) continue;
            Eigen::VectorXd rowR = Eigen::VectorXd::Zero(n);
            Eigen::VectorXd rowI = Eigen::VectorXd::Zero(n);
            for (int a = 0; a < n; ++a) {
                std::complex<double> dA(0.0, 0.0);
                if (a - d >= 0 && a - d < n) dA += std::polar(p[a - d], w * a);
                if (a + d >= 0 && a + d < n) dA += std::polar(p[a + d], w * (a + d));
                rowR[a] = wt * dA.real();
                rowI[a] = wt * dA.imag();
            }
            rows.push_back(fold(rowR));
            rows.push_back(fold(rowI));
        }
    }

    {
        Eigen::VectorXd row(n);
        for (int a = 0; a < n; ++a) row[a] = 2.0 * p[a];
        rows.push_back(fold(row));
    }

    Eigen::MatrixXd J(static_cast<Eigen::Index>(rows.size()), half);
    for (std::size_t r = 0; r < rows.size(); ++r) J.row(static_cast<Eigen::Index>(r)) = rows[r];
    return J;
}

inline std::vector<double> unfold_half(const Eigen::VectorXd& h, int n) {
    std::vector<double> p(n);
    const int half = (n + 1) / 2;
    for (int a = 0; a < half; ++a) {
        p[a] = h[a];
        p[n - 1 - a] = h[a];
    }
    return p;
}

inline std::vector<double> design_coefficients(int L, int O) {
    const int n = O * L + 1;
    const int half = (n + 1) / 2;

    std::vector<double> p = freq_sampled_srrc(L, O);
    Eigen::VectorXd ph(half);
    for (int a = 0; a < half; ++a) ph[a] = p[a];

    auto cost_of = [&](const Eigen::VectorXd& h) {
        const Eigen::VectorXd r = leakage_residuals(unfold_half(h, n), L, O);
        return r.squaredNorm();
    };

    double lambda = 1e-3;
    double cost = cost_of(ph);
    for (int iter = 0; iter < 200 && cost >= 1e-18; ++iter) {
        p = unfold_half(ph, n);
        const Eigen::VectorXd r = leakage_residuals(p, L, O);
        const Eigen::MatrixXd J = leakage_jacobian(p, L, O);
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd Jtr = J.transpose() * r;

        bool accepted = false;
        for (int attempt = 0; attempt < 60; ++attempt) {
            Eigen::MatrixXd M = JtJ;
            for (int a = 0; a < half; ++a) M(a, a) += lambda * (JtJ(a, a) + 1e-14);
            const Eigen::VectorXd delta = M.ldlt().solve(-Jtr);
            if (!delta.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd q = ph + delta;
            const double cq = cost_of(q);
            if (cq < cost) {
                ph = q;
                cost = cq;
                lambda = std::max(lambda * 0.5, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) break;
    }

    p = unfold_half(ph, n);
    double e = 0.0;
    for (double v : p) e += v * v;
    const double s = 1.0 / std::sqrt(e);
    for (double& v : p) v *= s;
    return p;
}

} // namespace detail

// Deterministic design; identical (L, O) give bit-identical coefficients.
// L must be even and >= 2; O >= 3.
inline PrototypeFilter design_prototype(int L, int O) {
    if (L < 2 || (L % 2) != 0) throw std::invalid_argument("design_prototype: L must be even and >= 2");
    if (O < 3) throw std::invalid_argument("design_prototype: O must be >= 3");

    static std::mutex cache_mutex;
    static std::map<std::pair<int, int>, std::vector<double>> cache;
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find({L, O});
        if (it != cache.end()) return PrototypeFilter{it->second, L, O};
    }
    std::vector<double> coeffs = detail::design_coefficients(L, O);
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        cache.insert({{L, O}, coeffs});
    }
    return PrototypeFilter{std::move(coeffs), L, O};
}

// One-column CSV export of the coefficients.
inline std::string prototype_to_csv(const PrototypeFilter& f) {
    std::string out = "coefficient\n";
    char buf[40];
    for (double v : f.coefficients) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", v);
        out += buf;
    }
    return out;
}

} // namespace cmtsim
