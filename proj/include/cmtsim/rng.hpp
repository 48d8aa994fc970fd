#pragma once

// Deterministic random-number utilities. The engine is std::mt19937_64 (pinned
// by the standard); uniform and Gaussian variates are generated locally instead
// of through std::*_distribution so that identical seeds give identical streams
// on every platform and standard library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace cmtsim {

// splitmix64 finalizing mix; statistically strong for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Fixed seed-splitting rule: child streams are independent of the order in
// which sibling indices are consumed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(master ^ mix64(index + 0x5851F42D4C957F2DULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via the trigonometric Box-Muller transform.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Offset keeps the argument of log strictly positive.
        const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    std::complex<double> gaussian_complex_unit() {
        // Circularly symmetric with E|z|^2 = 1.
        const double s = std::numbers::sqrt2;
        return {gaussian() / s, gaussian() / s};
    }

    // Uniform pick from a finite set.
    template <typename T>
    const T& pick(const std::vector<T>& items) {
        auto idx = static_cast<std::size_t>(uniform() * static_cast<double>(items.size()));
        if (idx >= items.size()) idx = items.size() - 1;
        return items[idx];
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace cmtsim
