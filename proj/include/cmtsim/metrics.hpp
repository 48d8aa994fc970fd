#pragma once

// Measurement utilities: output-SINR estimation with a least-squares gain
// fit, PAPR CCDF, open-eye distance, and Monte-Carlo aggregation of
// per-trial reports.

#include "cmtsim/cmt_modem.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmtsim {

struct SinrEstimate {
    double linear = 0.0;
    bool infinite = false;

    double db() const {
        return infinite ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(linear);
    }
};

inline double to_db(double linear) { return 10.0 * std::log10(linear); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

// Least-squares fit of estimate = alpha * reference + error, then
// SINR = alpha^2 E[ref^2] / E[error^2]. Scale-invariant in the estimate.
// Requires at least 100 symbols (transient exclusion is the caller's job).
inline SinrEstimate measure_sinr(const std::vector<double>& estimate,
                                 const std::vector<double>& reference) {
    if (estimate.size() != reference.size()) throw std::invalid_argument("measure_sinr: length mismatch");
    if (estimate.size() < 100) throw std::invalid_argument("measure_sinr: need at least 100 symbols");
    double sr = 0.0, se = 0.0;
    for (std::size_t n = 0; n < reference.size(); ++n) {
        sr += reference[n] * reference[n];
        se += estimate[n] * reference[n];
    }
    if (sr == 0.0) throw std::invalid_argument("measure_sinr: zero reference power");
    const double alpha = se / sr;
    double pe = 0.0;
    for (std::size_t n = 0; n < reference.size(); ++n) {
        const double e = estimate[n] - alpha * reference[n];
        pe += e * e;
    }
    pe /= static_cast<double>(reference.size());
    const double ps = alpha * alpha * sr / static_cast<double>(reference.size());
    SinrEstimate out;
    if (pe == 0.0) {
        out.infinite = true;
        out.linear = std::numeric_limits<double>::infinity();
    } else {
        out.linear = ps / pe;
    }
    return out;
}

// Mean distance of s * Re(y) to the nearest alphabet point, minimized over
// the sign s in {+1, -1} (the blind criterion's inherent ambiguity).
inline double open_eye_metric(const std::vector<std::complex<double>>& y,
                              const std::vector<double>& alphabet) {
    if (y.empty() || alphabet.empty()) throw std::invalid_argument("open_eye_metric: empty input");
    double best = std::numeric_limits<double>::infinity();
    for (double sign : {1.0, -1.0}) {
        double acc = 0.0;
        for (const auto& v : y) {
            const double r = sign * v.real();
            double d = std::numeric_limits<double>::infinity();
            for (double a : alphabet) d = std::min(d, std::abs(r - a));
            acc += d;
        }
        best = std::min(best, acc / static_cast<double>(y.size()));
    }
    return best;
}

struct PaprCcdf {
    std::vector<double> threshold_db; // 0.1 dB grid from 0 up to the max observed PAPR
    std::vector<double> probability;  // P(PAPR > threshold)
    int zero_power_blocks = 0;
};

// Per-block PAPR = max|x|^2 / mean|x|^2 over consecutive blocks, summarized
// as an empirical CCDF on a 0.1 dB grid. Requires >= 100 blocks.
inline PaprCcdf papr_ccdf(const BasebandSignal& signal, int block_len) {
    if (block_len < 1) throw std::invalid_argument("papr_ccdf: block_len must be >= 1");
    const std::size_t blocks = signal.samples.size() / static_cast<std::size_t>(block_len);
    if (blocks < 100) throw std::invalid_argument("papr_ccdf: signal shorter than 100 blocks");

    PaprCcdf out;
    std::vector<double> papr_db;
    for (std::size_t b = 0; b < blocks; ++b) {
        double peak = 0.0, mean = 0.0;
        for (int i = 0; i < block_len; ++i) {
            const double p = std::norm(signal.samples[b * block_len + i]);
            peak = std::max(peak, p);
            mean += p;
        }
        mean /= block_len;
        if (mean == 0.0) {
            ++out.zero_power_blocks;
            continue;
        }
        papr_db.push_back(to_db(peak / mean));
    }
    if (papr_db.empty()) throw std::invalid_argument("papr_ccdf: all blocks have zero power");

    const double top = *std::max_element(papr_db.begin(), papr_db.end());
    const int steps = static_cast<int>(std::ceil(top / 0.1)) + 1;
    for (int s = 0; s <= steps; ++s) {
        const double thr = 0.1 * s;
        double count = 0.0;
        for (double v : papr_db)
            if (v > thr) count += 1.0;
        out.threshold_db.push_back(thr);
        out.probability.push_back(count / static_cast<double>(papr_db.size()));
    }
    return out;
}

// Per-trial detection quality for one scenario: per (subcarrier, user) cells
// in dB, infinities allowed for exact noise-free recovery.
struct SinrReport {
    int L = 0, N = 0, K = 0;
    double sigma_v2 = 0.0;
    std::uint64_t seed = 0;
    RealGrid theory_mf_db;   // L x K
    RealGrid theory_mmse_db; // L x K
    RealGrid sim_mf_db;      // L x K
    RealGrid sim_mmse_db;    // L x K
};

struct AggregatedCell {
    double mean_db = 0.0; // linear-domain mean converted to dB
    double ci_lo_db = 0.0;
    double ci_hi_db = 0.0;
    int finite_count = 0;
    int infinite_count = 0;
};

struct AggregatedReport {
    int L = 0, N = 0, K = 0;
    double sigma_v2 = 0.0;
    std::uint64_t seed = 0; // master seed of the aggregated trials
    int num_trials = 0;
    std::vector<AggregatedCell> theory_mf, theory_mmse, sim_mf, sim_mmse; // L*K cells, k-major

    const AggregatedCell& cell(const std::vector<AggregatedCell>& grid, int k, int l) const {
        return grid[static_cast<std::size_t>(k) * K + l];
    }
};

namespace detail {

inline AggregatedCell aggregate_cell(const std::vector<const RealGrid*>& grids, int k, int l) {
    AggregatedCell cell;
    std::vector<double> lin;
    for (const RealGrid* g : grids) {
        const double db = g->at(k, l);
        if (std::isinf(db)) {
            ++cell.infinite_count;
        } else {
            lin.push_back(from_db(db));
        }
    }
    cell.finite_count = static_cast<int>(lin.size());
    if (lin.empty()) {
        cell.mean_db = std::numeric_limits<double>::infinity();
        cell.ci_lo_db = cell.ci_hi_db = cell.mean_db;
        return cell;
    }
    double mean = 0.0;
    for (double v : lin) mean += v;
    mean /= static_cast<double>(lin.size());
    double var = 0.0;
    for (double v : lin) var += (v - mean) * (v - mean);
    var = (lin.size() > 1) ? var / static_cast<double>(lin.size() - 1) : 0.0;
    const double half = 1.96 * std::sqrt(var / static_cast<double>(lin.size()));
    cell.mean_db = to_db(mean);
    cell.ci_lo_db = to_db(std::max(mean - half, 1e-300));
    cell.ci_hi_db = to_db(mean + half);
    return cell;
}

} // namespace detail

// Linear-domain mean and normal-approximation 95% CI per cell across trials.
// All reports must share one configuration; infinite cells are excluded and
// counted.
inline AggregatedReport aggregate(const std::vector<SinrReport>& reports) {
    if (reports.size() < 2) throw std::invalid_argument("aggregate: need at least 2 reports");
    const SinrReport& first = reports.front();
    for (const auto& r : reports)
        if (r.L != first.L || r.N != first.N || r.K != first.K || r.sigma_v2 != first.sigma_v2)
            throw std::invalid_argument("aggregate: mixed configurations");

    AggregatedReport agg;
    agg.L = first.L;
    agg.N = first.N;
    agg.K = first.K;
    agg.sigma_v2 = first.sigma_v2;
    agg.num_trials = static_cast<int>(reports.size());

    const auto collect = [&](RealGrid SinrReport::* member, std::vector<AggregatedCell>& out) {
        std::vector<const RealGrid*> grids;
        grids.reserve(reports.size());
        for (const auto& r : reports) grids.push_back(&(r.*member));
        out.reserve(static_cast<std::size_t>(first.L) * first.K);
        for (int k = 0; k < first.L; ++k)
            for (int l = 0; l < first.K; ++l) out.push_back(detail::aggregate_cell(grids, k, l));
    };
    collect(&SinrReport::theory_mf_db, agg.theory_mf);
    collect(&SinrReport::theory_mmse_db, agg.theory_mmse);
    collect(&SinrReport::sim_mf_db, agg.sim_mf);
    collect(&SinrReport::sim_mmse_db, agg.sim_mmse);
    return agg;
}

} // namespace cmtsim
