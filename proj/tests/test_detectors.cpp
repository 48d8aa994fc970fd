#include "cmtsim/detectors.hpp"
#include "cmtsim/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

using namespace cmtsim;

namespace {

Eigen::MatrixXcd random_H(int N, int K, Rng& rng) {
    Eigen::MatrixXcd H(N, K);
    for (int i = 0; i < N; ++i)
        for (int l = 0; l < K; ++l) H(i, l) = rng.gaussian_complex_unit();
    return H;
}

// draw x = A z + v and return the empirical per-user SINR of Wt * x
Eigen::VectorXd monte_carlo_sinr(const StackedSystem& sys, const Eigen::MatrixXd& W, int draws,
                                 Rng& rng) {
    const int K = sys.K;
    const Eigen::Index twoN = sys.A.rows();
    Eigen::VectorXd sig = Eigen::VectorXd::Zero(K), err = Eigen::VectorXd::Zero(K);
    const Eigen::MatrixXd G = W.transpose() * sys.A; // K x 2K
    const double sv = std::sqrt(sys.sigma_v2);
    Eigen::VectorXd z(2 * K), n(twoN);
    for (int t = 0; t < draws; ++t) {
        for (int j = 0; j < 2 * K; ++j) z[j] = rng.gaussian();
        for (Eigen::Index j = 0; j < twoN; ++j) n[j] = sv * rng.gaussian();
        const Eigen::VectorXd y = G * z + W.transpose() * n;
        for (int l = 0; l < K; ++l) {
            const double s = G(l, l) * z[l];
            sig[l] += s * s;
            const double e = y[l] - s;
            err[l] += e * e;
        }
    }
    return sig.cwiseQuotient(err);
}

} // namespace

TEST_CASE("stacking h = 1+j", "[detectors]") {
    Eigen::MatrixXcd H(1, 1);
    H(0, 0) = {1.0, 1.0};
    const StackedSystem sys = stack_real(H, 0.0);
    REQUIRE(sys.A.rows() == 2);
    REQUIRE(sys.A.cols() == 2);
    REQUIRE(sys.A(0, 0) == 1.0);
    REQUIRE(sys.A(1, 0) == 1.0);
    REQUIRE(sys.A(0, 1) == -1.0);
    REQUIRE(sys.A(1, 1) == 1.0);
    REQUIRE(sys.Ht().col(0).dot(sys.Hb().col(0)) == 0.0);
}

TEST_CASE("stacking identities hold exactly on random vectors", "[detectors]") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const int N = 1 + static_cast<int>(rng.raw() % 12);
        const Eigen::MatrixXcd H = random_H(N, 1, rng);
        const StackedSystem sys = stack_real(H, 0.1);
        const Eigen::VectorXd ht = sys.Ht().col(0), hb = sys.Hb().col(0);
        const double scale = ht.norm() * hb.norm();
        REQUIRE(std::abs(ht.dot(hb)) <= 1e-14 * scale);
        REQUIRE(std::abs(ht.norm() - hb.norm()) <= 1e-14 * ht.norm());
        // complex norm carried over
        REQUIRE(std::abs(ht.squaredNorm() - H.col(0).squaredNorm()) <= 1e-12 * ht.squaredNorm());
    }
}

TEST_CASE("cross terms reduce to real and imaginary parts of complex inner products", "[detectors]") {
    Rng rng(43);
    const Eigen::MatrixXcd H = random_H(6, 3, rng);
    const StackedSystem sys = stack_real(H, 0.0);
    for (int l = 0; l < 3; ++l)
        for (int i = 0; i < 3; ++i) {
            const std::complex<double> inner = H.col(l).adjoint() * H.col(i); // h_l^H h_i
            REQUIRE(std::abs(sys.Ht().col(l).dot(sys.Ht().col(i)) - inner.real()) <= 1e-12);
            // ht_l . hb_i picks up the conjugate-order imaginary part
            REQUIRE(std::abs(sys.Ht().col(l).dot(sys.Hb().col(i)) + inner.imag()) <= 1e-12);
        }
}

TEST_CASE("stacking rejects an all-zero user and tolerates duplicates", "[detectors]") {
    Eigen::MatrixXcd H(2, 2);
    H.setZero();
    H(0, 0) = {1.0, 0.0};
    REQUIRE_THROWS_AS(stack_real(H, 0.1), std::invalid_argument);
    H(0, 1) = H(0, 0); // duplicated users: construction must succeed
    H(1, 0) = H(1, 1) = {0.5, -0.5};
    REQUIRE_NOTHROW(stack_real(H, 0.1));
}

TEST_CASE("matched filter recovers a single user exactly without noise", "[detectors]") {
    Rng rng(7);
    const Eigen::MatrixXcd H = random_H(5, 1, rng);
    const StackedSystem sys = stack_real(H, 0.0);
    const DetectorWeights w = mf_weights(sys);
    REQUIRE(w.kind == DetectorKind::MF);
    const double s = -1.0, q = 0.7;
    const Eigen::VectorXd x = sys.Ht().col(0) * s + sys.Hb().col(0) * q;
    const Eigen::VectorXd shat = detect(w, x);
    REQUIRE(shat.size() == 1);
    REQUIRE(std::abs(shat[0] - s) <= 1e-12);
}

TEST_CASE("matched filter on orthogonal users has no cross terms", "[detectors]") {
    Eigen::MatrixXcd H(2, 2);
    H.setZero();
    H(0, 0) = {2.0, 1.0};
    H(1, 1) = {0.0, -3.0}; // disjoint antennas => exact orthogonality
    const StackedSystem sys = stack_real(H, 0.0);
    const DetectorWeights w = mf_weights(sys);
    Eigen::VectorXd z(4);
    z << 1.0, -1.0, 0.3, -0.9; // [s0 s1 q0 q1]
    const Eigen::VectorXd x = sys.A * z;
    const Eigen::VectorXd shat = detect(w, x);
    REQUIRE(std::abs(shat[0] - 1.0) <= 1e-12);
    REQUIRE(std::abs(shat[1] + 1.0) <= 1e-12);
}

TEST_CASE("matched filter output matches the term-by-term interference expansion", "[detectors]") {
    Rng rng(8);
    const Eigen::MatrixXcd H = random_H(4, 2, rng);
    const StackedSystem sys = stack_real(H, 0.0);
    const DetectorWeights w = mf_weights(sys);
    Eigen::VectorXd z(4);
    z << 1.0, -1.0, 0.25, -0.5;
    const Eigen::VectorXd shat = detect(w, sys.A * z);
    for (int l = 0; l < 2; ++l) {
        const Eigen::VectorXd h = sys.Ht().col(l);
        const double n2 = h.squaredNorm();
        double want = z[l]; // own symbol, unit gain; own q drops by orthogonality
        for (int i = 0; i < 2; ++i) {
            if (i != l) want += h.dot(sys.Ht().col(i)) * z[i] / n2;
            if (i != l) want += h.dot(sys.Hb().col(i)) * z[2 + i] / n2;
        }
        REQUIRE(std::abs(shat[l] - want) <= 1e-12);
    }
}

TEST_CASE("mmse weights follow the closed form and its limits", "[detectors]") {
    Rng rng(9);

    SECTION("large noise pushes mmse onto the matched filter direction") {
        const Eigen::MatrixXcd H = random_H(6, 2, rng);
        const StackedSystem sys = stack_real(H, 1e6);
        const Eigen::MatrixXd Wm = mmse_weights(sys).W;
        const Eigen::MatrixXd Wf = mf_weights(sys).W;
        for (int l = 0; l < 2; ++l) {
            const double cosine = Wm.col(l).dot(Wf.col(l)) / (Wm.col(l).norm() * Wf.col(l).norm());
            REQUIRE(cosine > 1.0 - 1e-6);
        }
    }

    SECTION("zero noise with a square system is zero forcing") {
        // N=K makes A square 2N x 2K; invertible for generic draws
        const Eigen::MatrixXcd H = random_H(2, 2, rng);
        const StackedSystem sys = stack_real(H, 0.0);
        const Eigen::MatrixXd W = mmse_weights(sys).W;
        Eigen::VectorXd z(4);
        z << 0.5, -1.5, 1.0, 2.0;
        const Eigen::VectorXd shat = W.transpose() * (sys.A * z);
        REQUIRE(std::abs(shat[0] - 0.5) <= 1e-8);
        REQUIRE(std::abs(shat[1] + 1.5) <= 1e-8);
    }

    SECTION("weights minimize the empirical mse") {
        const Eigen::MatrixXcd H = random_H(8, 2, rng);
        const StackedSystem sys = stack_real(H, 0.1);
        const Eigen::MatrixXd W = mmse_weights(sys).W;
        const int draws = 100000;
        auto mse_of = [&](const Eigen::MatrixXd& Wc) {
            Rng r2(1234); // same draws for every candidate
            double acc = 0.0;
            Eigen::VectorXd z(4), n(16);
            for (int t = 0; t < draws; ++t) {
                for (int j = 0; j < 4; ++j) z[j] = r2.gaussian();
                for (int j = 0; j < 16; ++j) n[j] = std::sqrt(0.1) * r2.gaussian();
                const Eigen::VectorXd y = Wc.transpose() * (sys.A * z + n);
                acc += (y - z.head(2)).squaredNorm();
            }
            return acc / draws;
        };
        const double base = mse_of(W);
        Rng r3(5);
        for (int trial = 0; trial < 4; ++trial) {
            Eigen::MatrixXd delta(16, 2);
            for (int i = 0; i < 16; ++i)
                for (int l = 0; l < 2; ++l) delta(i, l) = 0.02 * r3.gaussian();
            REQUIRE(mse_of(W + delta) > base);
        }
    }

    SECTION("singular zero-noise system raises an explicit error") {
        Eigen::MatrixXcd H(2, 2);
        H.col(0) << std::complex<double>(1.0, 1.0), std::complex<double>(0.0, 2.0);
        H.col(1) = H.col(0); // rank deficient
        const StackedSystem sys = stack_real(H, 0.0);
        REQUIRE_THROWS_AS(mmse_weights(sys), std::runtime_error);
    }
}

TEST_CASE("detect picks coordinates and validates dimensions", "[detectors]") {
    Eigen::MatrixXcd H(2, 1);
    H << std::complex<double>(1.0, 0.0), std::complex<double>(0.0, 0.0);
    const StackedSystem sys = stack_real(H, 0.0);
    DetectorWeights w;
    w.kind = DetectorKind::MF;
    w.W = Eigen::MatrixXd::Zero(4, 1);
    w.W(0, 0) = 1.0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
    x[0] = 3.5;
    REQUIRE(detect(w, x)[0] == 3.5);
    Eigen::VectorXd bad = Eigen::VectorXd::Zero(3);
    REQUIRE_THROWS_AS(detect(w, bad), std::invalid_argument);
}

TEST_CASE("mmse beats mf in empirical mse on a loaded system", "[detectors]") {
    Rng rng(10);
    const Eigen::MatrixXcd H = random_H(4, 3, rng);
    const StackedSystem sys = stack_real(H, 0.3);
    const Eigen::MatrixXd Wm = mmse_weights(sys).W;
    const Eigen::MatrixXd Wf = mf_weights(sys).W;
    double mse_m = 0.0, mse_f = 0.0;
    Rng draws(77);
    Eigen::VectorXd z(6), n(8);
    for (int t = 0; t < 20000; ++t) {
        for (int j = 0; j < 6; ++j) z[j] = draws.gaussian();
        for (int j = 0; j < 8; ++j) n[j] = std::sqrt(0.3) * draws.gaussian();
        const Eigen::VectorXd x = sys.A * z + n;
        mse_m += (Wm.transpose() * x - z.head(3)).squaredNorm();
        mse_f += (Wf.transpose() * x - z.head(3)).squaredNorm();
    }
    REQUIRE(mse_m < mse_f);
}

TEST_CASE("mf sinr closed form", "[detectors]") {
    SECTION("single user collapses to norm over noise") {
        Eigen::MatrixXcd H(2, 1);
        H << std::complex<double>(1.0, 1.0), std::complex<double>(1.0, 1.0); // stacked [1,1,1,1]
        const StackedSystem sys = stack_real(H, 0.1);
        const Eigen::VectorXd s = sinr_mf_theory(sys);
        REQUIRE(std::abs(s[0] - 40.0) <= 1e-12);
    }
    SECTION("noise-free single user is flagged infinite") {
        Eigen::MatrixXcd H(3, 1);
        H << std::complex<double>(0.3, -0.1), std::complex<double>(1.0, 0.5),
            std::complex<double>(-0.2, 0.0);
        const StackedSystem sys = stack_real(H, 0.0);
        REQUIRE(std::isinf(sinr_mf_theory(sys)[0]));
    }
    SECTION("matches monte carlo within 0.2 dB") {
        Rng rng(11);
        const Eigen::MatrixXcd H = random_H(4, 2, rng);
        const StackedSystem sys = stack_real(H, 0.2);
        const Eigen::VectorXd theory = sinr_mf_theory(sys);
        Rng mc(500);
        const Eigen::VectorXd sim = monte_carlo_sinr(sys, mf_weights(sys).W, 1000000, mc);
        for (int l = 0; l < 2; ++l) {
            const double gap = 10.0 * std::log10(theory[l] / sim[l]);
            REQUIRE(std::abs(gap) <= 0.2);
        }
    }
}

TEST_CASE("mmse sinr closed form", "[detectors]") {
    SECTION("single user equals the matched filter") {
        Rng rng(12);
        const Eigen::MatrixXcd H = random_H(6, 1, rng);
        const StackedSystem sys = stack_real(H, 0.25);
        REQUIRE(std::abs(sinr_mmse_theory(sys)[0] / sinr_mf_theory(sys)[0] - 1.0) <= 1e-9);
    }
    SECTION("dominates the matched filter on every user") {
        Rng rng(13);
        for (int trial = 0; trial < 25; ++trial) {
            const Eigen::MatrixXcd H = random_H(5, 3, rng);
            const StackedSystem sys = stack_real(H, 0.15);
            const Eigen::VectorXd mm = sinr_mmse_theory(sys);
            const Eigen::VectorXd mf = sinr_mf_theory(sys);
            for (int l = 0; l < 3; ++l) REQUIRE(mm[l] >= mf[l] * (1.0 - 1e-9));
        }
    }
    SECTION("matches monte carlo within 0.2 dB") {
        Rng rng(14);
        const Eigen::MatrixXcd H = random_H(4, 2, rng);
        const StackedSystem sys = stack_real(H, 0.2);
        const Eigen::VectorXd theory = sinr_mmse_theory(sys);
        Rng mc(501);
        const Eigen::VectorXd sim = monte_carlo_sinr(sys, mmse_weights(sys).W, 1000000, mc);
        for (int l = 0; l < 2; ++l) {
            const double gap = 10.0 * std::log10(theory[l] / sim[l]);
            REQUIRE(std::abs(gap) <= 0.2);
        }
    }
}

TEST_CASE("diagonal-gram simplification of mmse is the matched filter", "[detectors]") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        const int N = 2 + static_cast<int>(rng.raw() % 6);
        const int K = 1 + static_cast<int>(rng.raw() % 3);
        const Eigen::MatrixXcd H = random_H(N, K, rng);
        const StackedSystem sys = stack_real(H, 0.1);
        const Eigen::MatrixXd diff = mf_as_simplified_mmse(sys).W - mf_weights(sys).W;
        REQUIRE(diff.cwiseAbs().maxCoeff() <= 1e-12);
    }
    SECTION("orthogonal columns make zero-noise mmse collapse to mf too") {
        Eigen::MatrixXcd H(2, 2);
        H.setZero();
        H(0, 0) = {1.0, 2.0};
        H(1, 1) = {-1.0, 0.5};
        const StackedSystem sys = stack_real(H, 0.0);
        const Eigen::MatrixXd diff = mmse_weights(sys).W - mf_weights(sys).W;
        REQUIRE(diff.cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("sinr formulas are scale invariant", "[detectors]") {
    Rng rng(16);
    const Eigen::MatrixXcd H = random_H(5, 2, rng);
    const double c = 3.7;
    const StackedSystem a = stack_real(H, 0.2);
    const StackedSystem b = stack_real(c * H, c * c * 0.2);
    const Eigen::VectorXd mfa = sinr_mf_theory(a), mfb = sinr_mf_theory(b);
    const Eigen::VectorXd mma = sinr_mmse_theory(a), mmb = sinr_mmse_theory(b);
    for (int l = 0; l < 2; ++l) {
        REQUIRE(std::abs(mfa[l] / mfb[l] - 1.0) <= 1e-10);
        REQUIRE(std::abs(mma[l] / mmb[l] - 1.0) <= 1e-10);
    }
}

TEST_CASE("processing gain scales with the antenna count", "[detectors]") {
    // K=1, i.i.d. unit-power flat links: mean MF SINR = N * input SNR
    Rng rng(17);
    const double snr_in = std::pow(10.0, 0.5); // ~3 dB
    for (int N : {8, 32}) {
        double acc = 0.0;
        const int reps = 1000;
        for (int t = 0; t < reps; ++t) {
            const Eigen::MatrixXcd H = random_H(N, 1, rng);
            const StackedSystem sys = stack_real(H, 1.0 / snr_in);
            acc += sinr_mf_theory(sys)[0];
        }
        const double gain_db = 10.0 * std::log10(acc / reps / snr_in);
        REQUIRE(std::abs(gain_db - 10.0 * std::log10(static_cast<double>(N))) <= 0.3);
    }
}

TEST_CASE("mf interference vanishes at 3 db per antenna doubling", "[detectors]") {
    Rng rng(18);
    const int K = 3, reps = 400;
    std::vector<double> median_isr;
    for (int N : {8, 16, 32, 64, 128, 256}) {
        std::vector<double> isr;
        isr.reserve(reps);
        for (int t = 0; t < reps; ++t) {
            const Eigen::MatrixXcd H = random_H(N, K, rng);
            const StackedSystem sys = stack_real(H, 0.0);
            const Eigen::VectorXd h = sys.Ht().col(0);
            double interference = 0.0;
            for (int i = 0; i < K; ++i) {
                if (i != 0) {
                    const double a = h.dot(sys.Ht().col(i));
                    interference += a * a;
                }
                const double b = h.dot(sys.Hb().col(i));
                interference += b * b;
            }
            isr.push_back(interference / (h.squaredNorm() * h.squaredNorm()));
        }
        std::nth_element(isr.begin(), isr.begin() + reps / 2, isr.end());
        median_isr.push_back(isr[reps / 2]);
    }
    for (std::size_t j = 1; j < median_isr.size(); ++j) {
        const double step_db = 10.0 * std::log10(median_isr[j] / median_isr[j - 1]);
        REQUIRE(step_db <= -3.0 + 1.0);
        REQUIRE(step_db >= -3.0 - 1.0);
    }
}
