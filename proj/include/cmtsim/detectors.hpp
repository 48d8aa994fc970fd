#pragma once

// Per-subcarrier real-stacked system and the MF / MMSE linear detectors with
// their closed-form output-SINR expressions.
//
// The complex N x K gain matrix H is stacked as A = [Ht Hb] (2N x 2K) with
// Ht columns [Re h; Im h] and Hb columns [-Im h; Re h]. The PAM symbols ride
// on the Ht columns; the Hb columns carry the unit-variance ISI/ICI terms,
// which act as K additional real interferers.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmtsim {

struct StackedSystem {
    Eigen::MatrixXd A; // 2N x 2K
    int K = 0;
    double sigma_v2 = 0.0; // noise variance per real component of the stacked model

    Eigen::Ref<const Eigen::MatrixXd> Ht() const { return A.leftCols(K); }
    Eigen::Ref<const Eigen::MatrixXd> Hb() const { return A.rightCols(K); }
};

enum class DetectorKind { MF, MMSE };

struct DetectorWeights {
    Eigen::MatrixXd W; // 2N x K, column l detects user l
    DetectorKind kind = DetectorKind::MF;
};

inline StackedSystem stack_real(const Eigen::MatrixXcd& H, double sigma_v2) {
    const Eigen::Index N = H.rows();
    const Eigen::Index K = H.cols();
    if (N < 1 || K < 1) throw std::invalid_argument("stack_real: empty system");
    if (sigma_v2 < 0.0) throw std::invalid_argument("stack_real: negative noise variance");
    StackedSystem sys;
    sys.K = static_cast<int>(K);
    sys.sigma_v2 = sigma_v2;
    sys.A.resize(2 * N, 2 * K);
    for (Eigen::Index l = 0; l < K; ++l) {
        if (H.col(l).norm() == 0.0) throw std::invalid_argument("stack_real: all-zero user column");
        sys.A.block(0, l, N, 1) = H.col(l).real();
        sys.A.block(N, l, N, 1) = H.col(l).imag();
        sys.A.block(0, K + l, N, 1) = -H.col(l).imag();
        sys.A.block(N, K + l, N, 1) = H.col(l).real();
    }
    return sys;
}

// Matched filter: column l is ht_l / ||ht_l||^2, so the own-symbol gain is 1.
inline DetectorWeights mf_weights(const StackedSystem& sys) {
    DetectorWeights w;
    w.kind = DetectorKind::MF;
    w.W.resize(sys.A.rows(), sys.K);
    for (int l = 0; l < sys.K; ++l) {
        const double n2 = sys.Ht().col(l).squaredNorm();
        if (n2 <= 0.0) throw std::invalid_argument("mf_weights: degenerate user");
        w.W.col(l) = sys.Ht().col(l) / n2;
    }
    return w;
}

// MMSE: W = A (A^T A + sigma_v2 I)^{-1} restricted to the K symbol columns.
// The 2K x 2K Gram form is used. Singular or ill-conditioned systems
// (possible only at sigma_v2 = 0) raise instead of pseudo-inverting.
inline DetectorWeights mmse_weights(const StackedSystem& sys) {
    const int K2 = 2 * sys.K;
    Eigen::MatrixXd G = sys.A.transpose() * sys.A;
    G.diagonal().array() += sys.sigma_v2;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12))
        throw std::runtime_error("mmse_weights: system is singular or ill-conditioned (sigma_v2 too small)");
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(K2, sys.K);
    rhs.topRows(sys.K).setIdentity();
    DetectorWeights w;
    w.kind = DetectorKind::MMSE;
    w.W = sys.A * ldlt.solve(rhs);
    return w;
}

// The diagonal approximation of the MMSE solve; algebraically identical to
// mf_weights because (A^T A) has ||ht_l||^2 on the symbol diagonal.
inline DetectorWeights mf_as_simplified_mmse(const StackedSystem& sys) {
    DetectorWeights w;
    w.kind = DetectorKind::MF;
    w.W.resize(sys.A.rows(), sys.K);
    for (int l = 0; l < sys.K; ++l) {
        const double d = sys.A.col(l).squaredNorm();
        if (d <= 0.0) throw std::invalid_argument("mf_as_simplified_mmse: degenerate user");
        w.W.col(l) = sys.A.col(l) / d;
    }
    return w;
}

inline Eigen::VectorXd detect(const DetectorWeights& w, const Eigen::VectorXd& x_stacked) {
    if (x_stacked.size() != w.W.rows()) throw std::invalid_argument("detect: dimension mismatch");
    return w.W.transpose() * x_stacked;
}

// Closed-form MF output SINR per user (linear scale):
// ||ht_l||^4 / (sum_{i != l} [(ht_l . ht_i)^2 + (ht_l . hb_i)^2] + sigma_v2 ||ht_l||^2).
// Noise-free single-user systems evaluate to +infinity.
inline Eigen::VectorXd sinr_mf_theory(const StackedSystem& sys) {
    Eigen::VectorXd out(sys.K);
    for (int l = 0; l < sys.K; ++l) {
        const Eigen::VectorXd h = sys.Ht().col(l);
        const double n2 = h.squaredNorm();
        if (n2 <= 0.0) throw std::invalid_argument("sinr_mf_theory: degenerate user");
        double denom = sys.sigma_v2 * n2;
        for (int i = 0; i < sys.K; ++i) {
            if (i == l) continue;
            const double a = h.dot(sys.Ht().col(i));
            const double b = h.dot(sys.Hb().col(i));
            denom += a * a + b * b;
        }
        out[l] = (denom > 0.0) ? (n2 * n2 / denom) : std::numeric_limits<double>::infinity();
    }
    return out;
}

// Closed-form MMSE output SINR per user (linear scale), evaluated on the
// mmse_weights output. The interference sum over the q columns runs over all
// i, including the own-q term.
inline Eigen::VectorXd sinr_mmse_theory(const StackedSystem& sys) {
    const DetectorWeights wts = mmse_weights(sys);
    Eigen::VectorXd out(sys.K);
    for (int l = 0; l < sys.K; ++l) {
        const Eigen::VectorXd w = wts.W.col(l);
        const double g = w.dot(sys.Ht().col(l));
        double denom = sys.sigma_v2 * w.squaredNorm();
        for (int i = 0; i < sys.K; ++i) {
            if (i != l) {
                const double a = w.dot(sys.Ht().col(i));
                denom += a * a;
            }
            const double b = w.dot(sys.Hb().col(i));
            denom += b * b;
        }
        out[l] = (denom > 0.0) ? (g * g / denom) : std::numeric_limits<double>::infinity();
    }
    return out;
}

} // namespace cmtsim
