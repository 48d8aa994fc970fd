#pragma once

// Configuration-driven scenario runner: parses the line-based key = value
// config format, runs the full per-trial pipeline (channel realization,
// waveform synthesis, channel + noise, analysis bank, per-subcarrier
// detection, SINR measurement against the closed-form values), aggregates
// trials, and persists deterministic CSV result tables.

#include "cmtsim/blind_eq.hpp"
#include "cmtsim/channel_model.hpp"
#include "cmtsim/cmt_modem.hpp"
#include "cmtsim/detectors.hpp"
#include "cmtsim/metrics.hpp"
#include "cmtsim/prototype_filter.hpp"
#include "cmtsim/rng.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <complex>
#include <numbers>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmtsim {

enum class ModemKind { CMT, OFDM };
enum class DetectorChoice { MF, MMSE, BOTH };
enum class ChannelKind { SUI4, FLAT_RANDOM, IDENTITY };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
    ModemKind modem = ModemKind::CMT;
    int L = 0;
    int O = 0;
    int N = 0;
    int K = 0;
    DetectorChoice detector = DetectorChoice::BOTH;
    ChannelKind channel = ChannelKind::SUI4;
    bool noise_free = false;
    double snr_in_db = 0.0;
    int num_symbols = 0;
    int num_trials = 0;
    std::uint64_t master_seed = 0;
    double fs_hz = 2.8e6;        // optional key
    int alphabet_levels = 2;     // "2pam" or "4pam"
    bool nested_antennas = false; // optional key
    int cp_len = -1;              // optional key; -1 means L/2 (OFDM only)

    // Noise variance per real component of the stacked model; the complex
    // waveform AWGN variance is twice this.
    double sigma_stacked2() const {
        return noise_free ? 0.0 : std::pow(10.0, -snr_in_db / 10.0);
    }
    int effective_cp() const { return cp_len >= 0 ? cp_len : L / 2; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline long long parse_int(const std::string& v, const std::string& key, int line) {
    std::size_t pos = 0;
    long long out;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": value of '" + key + "' is not an integer");
    }
    if (pos != v.size())
        throw ConfigError("line " + std::to_string(line) + ": value of '" + key + "' is not an integer");
    return out;
}

inline double parse_real(const std::string& v, const std::string& key, int line) {
    std::size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": value of '" + key + "' is not a number");
    }
    if (pos != v.size())
        throw ConfigError("line " + std::to_string(line) + ": value of '" + key + "' is not a number");
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key, int line) {
    const std::string s = lower(v);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError("line " + std::to_string(line) + ": value of '" + key + "' must be true or false");
}

} // namespace detail

inline ScenarioConfig parse_config(const std::string& text) {
    ScenarioConfig cfg;
    std::map<std::string, int> seen; // key -> line number
    std::istringstream in(text);
    std::string raw;
    int line = 0;

    auto need_line = [&](const std::string& key) {
        auto it = seen.find(key);
        return it == seen.end() ? 0 : it->second;
    };

    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        if (const auto hash = s.find('#'); hash != std::string::npos) s.resize(hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string value = detail::trim(s.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
        if (seen.count(key))
            throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
        seen[key] = line;

        const std::string lv = detail::lower(value);
        if (key == "modem") {
            if (lv == "cmt") cfg.modem = ModemKind::CMT;
            else if (lv == "ofdm") cfg.modem = ModemKind::OFDM;
            else throw ConfigError("line " + std::to_string(line) + ": modem must be cmt or ofdm");
        } else if (key == "L") {
            cfg.L = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "O") {
            cfg.O = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "N") {
            cfg.N = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "K") {
            cfg.K = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "detector") {
            if (lv == "mf") cfg.detector = DetectorChoice::MF;
            else if (lv == "mmse") cfg.detector = DetectorChoice::MMSE;
            else if (lv == "both") cfg.detector = DetectorChoice::BOTH;
            else throw ConfigError("line " + std::to_string(line) + ": detector must be mf, mmse, or both");
        } else if (key == "channel") {
            if (lv == "sui4") cfg.channel = ChannelKind::SUI4;
            else if (lv == "flat_random") cfg.channel = ChannelKind::FLAT_RANDOM;
            else if (lv == "identity") cfg.channel = ChannelKind::IDENTITY;
            else throw ConfigError("line " + std::to_string(line) + ": channel must be sui4, flat_random, or identity");
        } else if (key == "snr_in_db") {
            if (lv == "noise_free") {
                cfg.noise_free = true;
            } else {
                cfg.snr_in_db = detail::parse_real(value, key, line);
            }
        } else if (key == "num_symbols") {
            cfg.num_symbols = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "num_trials") {
            cfg.num_trials = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "master_seed") {
            try {
                std::size_t pos = 0;
                cfg.master_seed = std::stoull(value, &pos);
                if (pos != value.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ConfigError("line " + std::to_string(line) + ": value of 'master_seed' is not an unsigned integer");
            }
        } else if (key == "fs_hz") {
            cfg.fs_hz = detail::parse_real(value, key, line);
        } else if (key == "alphabet") {
            if (lv == "2pam") cfg.alphabet_levels = 2;
            else if (lv == "4pam") cfg.alphabet_levels = 4;
            else throw ConfigError("line " + std::to_string(line) + ": alphabet must be 2pam or 4pam");
        } else if (key == "nested_antennas") {
            cfg.nested_antennas = detail::parse_bool(value, key, line);
        } else if (key == "cp_len") {
            cfg.cp_len = static_cast<int>(detail::parse_int(value, key, line));
        } else {
            throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
        }
    }

    for (const char* req : {"modem", "L", "O", "N", "K", "detector", "channel", "snr_in_db",
                            "num_symbols", "num_trials", "master_seed", "alphabet"})
        if (!seen.count(req)) throw ConfigError(std::string("missing required key '") + req + "'");

    auto fail_at = [&](const std::string& key, const std::string& msg) {
        throw ConfigError("line " + std::to_string(need_line(key)) + ": " + msg);
    };
    if (cfg.L < 2 || cfg.L % 2 != 0) fail_at("L", "L must be even and >= 2");
    if (cfg.O < 3) fail_at("O", "O must be >= 3");
    if (cfg.N < 1) fail_at("N", "N must be >= 1");
    if (cfg.K < 1) fail_at("K", "K must be >= 1");
    if (cfg.num_symbols <= 2 * cfg.O) fail_at("num_symbols", "num_symbols must exceed 2*O");
    if (cfg.num_trials < 1) fail_at("num_trials", "num_trials must be >= 1");
    if (cfg.fs_hz <= 0.0) fail_at("fs_hz", "fs_hz must be positive");
    if (cfg.cp_len >= 0 && cfg.modem != ModemKind::OFDM) fail_at("cp_len", "cp_len applies to the ofdm modem only");
    return cfg;
}

inline ScenarioConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

inline std::string config_echo(const ScenarioConfig& cfg) {
    std::ostringstream out;
    out << "modem = " << (cfg.modem == ModemKind::CMT ? "cmt" : "ofdm") << "\n";
    out << "L = " << cfg.L << "\n";
    out << "O = " << cfg.O << "\n";
    out << "N = " << cfg.N << "\n";
    out << "K = " << cfg.K << "\n";
    out << "detector = "
        << (cfg.detector == DetectorChoice::MF ? "mf"
                                               : cfg.detector == DetectorChoice::MMSE ? "mmse" : "both")
        << "\n";
    out << "channel = "
        << (cfg.channel == ChannelKind::SUI4
                ? "sui4"
                : cfg.channel == ChannelKind::FLAT_RANDOM ? "flat_random" : "identity")
        << "\n";
    if (cfg.noise_free) {
        out << "snr_in_db = noise_free\n";
    } else {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.10g", cfg.snr_in_db);
        out << "snr_in_db = " << buf << "\n";
    }
    out << "num_symbols = " << cfg.num_symbols << "\n";
    out << "num_trials = " << cfg.num_trials << "\n";
    out << "master_seed = " << cfg.master_seed << "\n";
    {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.10g", cfg.fs_hz);
        out << "fs_hz = " << buf << "\n";
    }
    out << "alphabet = " << (cfg.alphabet_levels == 2 ? "2pam" : "4pam") << "\n";
    out << "nested_antennas = " << (cfg.nested_antennas ? "true" : "false") << "\n";
    if (cfg.modem == ModemKind::OFDM) out << "cp_len = " << cfg.effective_cp() << "\n";
    return out.str();
}

struct ResultTable {
    ScenarioConfig config;
    AggregatedReport agg;
    int format_version = 1;
    // channel realization of trial 0, exported on request
    std::string trial0_channel_csv;
};

namespace detail {

inline ChannelSet realize_channel(const ScenarioConfig& cfg, std::uint64_t channel_seed) {
    switch (cfg.channel) {
        case ChannelKind::SUI4: return realize_sui4(cfg.K, cfg.N, cfg.fs_hz, channel_seed);
        case ChannelKind::FLAT_RANDOM: return flat_random(cfg.K, cfg.N, channel_seed);
        default: return identity_channel(cfg.K, cfg.N);
    }
}

inline Eigen::MatrixXcd gains_matrix(const SubcarrierGains& g, int k,
                                     std::complex<double> phase = {1.0, 0.0}) {
    Eigen::MatrixXcd H(g.N, g.K);
    for (int i = 0; i < g.N; ++i)
        for (int l = 0; l < g.K; ++l) H(i, l) = g.at(k, i, l) * phase;
    return H;
}

// One CMT trial: returns the per-cell dB report.
inline SinrReport run_cmt_trial(const ScenarioConfig& cfg, const PrototypeFilter& proto,
                                std::uint64_t trial_seed) {
    const int L = cfg.L, T = cfg.num_symbols, K = cfg.K, N = cfg.N, O = cfg.O;
    const double sigma_s2 = cfg.sigma_stacked2();
    const std::uint64_t channel_seed = derive_seed(trial_seed, 0);
    const std::uint64_t symbol_seed = derive_seed(trial_seed, 1);
    const std::uint64_t noise_seed = derive_seed(trial_seed, 2);

    const ChannelSet ch = realize_channel(cfg, channel_seed);
    const int d0 = timing_reference(ch);
    const SubcarrierGains gains = subcarrier_gains(ch, L, 0.5);
    const std::vector<double> alphabet = pam_alphabet(cfg.alphabet_levels);

    std::vector<PamGrid> grids;
    std::vector<BasebandSignal> signals;
    grids.reserve(K);
    signals.reserve(K);
    for (int l = 0; l < K; ++l) {
        Rng rng(derive_seed(symbol_seed, static_cast<std::uint64_t>(l)));
        grids.push_back(random_pam_grid(L, T, alphabet, rng));
        BasebandSignal s = cmt_modulate_fast(grids.back(), proto);
        s.sample_rate_hz = cfg.fs_hz;
        signals.push_back(std::move(s));
    }

    std::vector<BasebandSignal> rx = apply_channel(signals, ch, NoiseSpec{2.0 * sigma_s2}, noise_seed);
    signals.clear();

    std::vector<SubcarrierOutputs> Y;
    Y.reserve(N);
    for (int i = 0; i < N; ++i) {
        if (d0 > 0) rx[i].samples.erase(rx[i].samples.begin(), rx[i].samples.begin() + d0);
        Y.push_back(cmt_demodulate_fast(rx[i], proto, L, T));
        rx[i].samples.clear();
        rx[i].samples.shrink_to_fit();
    }

    SinrReport rep;
    rep.L = L;
    rep.N = N;
    rep.K = K;
    rep.sigma_v2 = sigma_s2;
    rep.seed = trial_seed;
    rep.theory_mf_db = RealGrid(L, K);
    rep.theory_mmse_db = RealGrid(L, K);
    rep.sim_mf_db = RealGrid(L, K);
    rep.sim_mmse_db = RealGrid(L, K);

    const int t0 = O, t1 = T - O; // transient exclusion
    const int teff = t1 - t0;
    for (int k = 0; k < L; ++k) {
        const std::complex<double> advance =
            std::polar(1.0, 2.0 * std::numbers::pi * (k + 0.5) * d0 / L);
        const StackedSystem sys = stack_real(gains_matrix(gains, k, advance), sigma_s2);

        const Eigen::VectorXd th_mf = sinr_mf_theory(sys);
        const Eigen::VectorXd th_mmse = sinr_mmse_theory(sys);
        for (int l = 0; l < K; ++l) {
            rep.theory_mf_db.at(k, l) = to_db(th_mf[l]);
            rep.theory_mmse_db.at(k, l) = to_db(th_mmse[l]);
        }

        Eigen::MatrixXd Xk(2 * N, teff);
        for (int i = 0; i < N; ++i)
            for (int n = 0; n < teff; ++n) {
                const std::complex<double> v = Y[i].at(k, t0 + n);
                Xk(i, n) = v.real();
                Xk(N + i, n) = v.imag();
            }

        const Eigen::MatrixXd est_mf = mf_weights(sys).W.transpose() * Xk;
        const Eigen::MatrixXd est_mmse = mmse_weights(sys).W.transpose() * Xk;
        for (int l = 0; l < K; ++l) {
            std::vector<double> ref(teff), e_mf(teff), e_mmse(teff);
            for (int n = 0; n < teff; ++n) {
                ref[n] = grids[l].symbols.at(k, t0 + n);
                e_mf[n] = est_mf(l, n);
                e_mmse[n] = est_mmse(l, n);
            }
            rep.sim_mf_db.at(k, l) = measure_sinr(e_mf, ref).db();
            rep.sim_mmse_db.at(k, l) = measure_sinr(e_mmse, ref).db();
        }
    }
    return rep;
}

// One OFDM trial; QAM bins carry one alphabet draw per real dimension, so the
// stacked system sees 2K unit-variance real users and the same formulas apply.
inline SinrReport run_ofdm_trial(const ScenarioConfig& cfg, std::uint64_t trial_seed) {
    const int L = cfg.L, T = cfg.num_symbols, K = cfg.K, N = cfg.N;
    const int cp = cfg.effective_cp();
    const double sigma_s2 = cfg.sigma_stacked2();
    const std::uint64_t channel_seed = derive_seed(trial_seed, 0);
    const std::uint64_t symbol_seed = derive_seed(trial_seed, 1);
    const std::uint64_t noise_seed = derive_seed(trial_seed, 2);

    const ChannelSet ch = realize_channel(cfg, channel_seed);
    if (cp < ch.max_delay)
        throw std::runtime_error("ofdm run: cp_len shorter than the channel delay spread");
    const SubcarrierGains gains = subcarrier_gains(ch, L, 0.0);
    const std::vector<double> alphabet = pam_alphabet(cfg.alphabet_levels);

    std::vector<ComplexGrid> grids;
    std::vector<BasebandSignal> signals;
    for (int l = 0; l < K; ++l) {
        Rng rng(derive_seed(symbol_seed, static_cast<std::uint64_t>(l)));
        ComplexGrid g(L, T);
        for (int k = 0; k < L; ++k)
            for (int n = 0; n < T; ++n) {
                const double re = rng.pick(alphabet);
                const double im = rng.pick(alphabet);
                g.at(k, n) = {re, im};
            }
        grids.push_back(g);
        BasebandSignal s = ofdm_modulate(g, L, cp);
        s.sample_rate_hz = cfg.fs_hz;
        signals.push_back(std::move(s));
    }

    std::vector<BasebandSignal> rx = apply_channel(signals, ch, NoiseSpec{2.0 * sigma_s2}, noise_seed);
    signals.clear();

    std::vector<ComplexGrid> Z;
    Z.reserve(N);
    for (int i = 0; i < N; ++i) Z.push_back(ofdm_demodulate(rx[i], L, cp, T));

    SinrReport rep;
    rep.L = L;
    rep.N = N;
    rep.K = K;
    rep.sigma_v2 = sigma_s2;
    rep.seed = trial_seed;
    rep.theory_mf_db = RealGrid(L, K);
    rep.theory_mmse_db = RealGrid(L, K);
    rep.sim_mf_db = RealGrid(L, K);
    rep.sim_mmse_db = RealGrid(L, K);

    for (int k = 0; k < L; ++k) {
        const StackedSystem sys = stack_real(gains_matrix(gains, k), sigma_s2);
        const Eigen::VectorXd th_mf = sinr_mf_theory(sys);
        const Eigen::VectorXd th_mmse = sinr_mmse_theory(sys);
        for (int l = 0; l < K; ++l) {
            rep.theory_mf_db.at(k, l) = to_db(th_mf[l]);
            rep.theory_mmse_db.at(k, l) = to_db(th_mmse[l]);
        }

        Eigen::MatrixXd Xk(2 * N, T);
        for (int i = 0; i < N; ++i)
            for (int n = 0; n < T; ++n) {
                const std::complex<double> v = Z[i].at(k, n);
                Xk(i, n) = v.real();
                Xk(N + i, n) = v.imag();
            }

        const Eigen::MatrixXd est_mf = mf_weights(sys).W.transpose() * Xk;
        const Eigen::MatrixXd est_mmse = mmse_weights(sys).W.transpose() * Xk;
        for (int l = 0; l < K; ++l) {
            std::vector<double> ref(T), e_mf(T), e_mmse(T);
            for (int n = 0; n < T; ++n) {
                ref[n] = grids[l].at(k, n).real();
                e_mf[n] = est_mf(l, n);
                e_mmse[n] = est_mmse(l, n);
            }
            rep.sim_mf_db.at(k, l) = measure_sinr(e_mf, ref).db();
            rep.sim_mmse_db.at(k, l) = measure_sinr(e_mmse, ref).db();
        }
    }
    return rep;
}

inline AggregatedReport aggregate_allow_single(const std::vector<SinrReport>& reports) {
    if (reports.size() >= 2) return aggregate(reports);
    const SinrReport& r = reports.front();
    AggregatedReport agg;
    agg.L = r.L;
    agg.N = r.N;
    agg.K = r.K;
    agg.sigma_v2 = r.sigma_v2;
    agg.num_trials = 1;
    const auto copy = [&](const RealGrid& g, std::vector<AggregatedCell>& out) {
        for (int k = 0; k < r.L; ++k)
            for (int l = 0; l < r.K; ++l) {
                AggregatedCell c;
                c.mean_db = g.at(k, l);
                c.ci_lo_db = c.ci_hi_db = c.mean_db;
                c.finite_count = std::isinf(c.mean_db) ? 0 : 1;
                c.infinite_count = 1 - c.finite_count;
                out.push_back(c);
            }
    };
    copy(r.theory_mf_db, agg.theory_mf);
    copy(r.theory_mmse_db, agg.theory_mmse);
    copy(r.sim_mf_db, agg.sim_mf);
    copy(r.sim_mmse_db, agg.sim_mmse);
    return agg;
}

} // namespace detail

// Full deterministic pipeline. Per-trial seeds are derive_seed(master, trial).
inline ResultTable run_scenario(const ScenarioConfig& cfg) {
    std::optional<PrototypeFilter> proto;
    if (cfg.modem == ModemKind::CMT) proto = design_prototype(cfg.L, cfg.O);

    std::vector<SinrReport> reports;
    reports.reserve(static_cast<std::size_t>(cfg.num_trials));
    ResultTable table;
    for (int t = 0; t < cfg.num_trials; ++t) {
        const std::uint64_t trial_seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(t));
        try {
            if (t == 0)
                table.trial0_channel_csv =
                    channel_to_csv(detail::realize_channel(cfg, derive_seed(trial_seed, 0)));
            reports.push_back(cfg.modem == ModemKind::CMT
                                  ? detail::run_cmt_trial(cfg, *proto, trial_seed)
                                  : detail::run_ofdm_trial(cfg, trial_seed));
        } catch (const std::exception& e) {
            throw std::runtime_error("trial " + std::to_string(t) + ": " + e.what());
        }
    }
    table.config = cfg;
    table.agg = detail::aggregate_allow_single(reports);
    table.agg.seed = cfg.master_seed;
    return table;
}

// Sweep one key over explicit values. Channels are re-drawn per value except
// for N-sweeps with nested_antennas, where the per-link seeding makes smaller
// arrays exact prefixes of larger ones under the shared master seed.
inline std::vector<ResultTable> run_sweep(const ScenarioConfig& base, const std::string& key,
                                          const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("run_sweep: empty value list");
    if (key != "N" && key != "L" && key != "snr_in_db" && key != "K")
        throw ConfigError("run_sweep: sweep key must be one of N, L, snr_in_db, K");

    std::vector<ResultTable> out;
    for (std::size_t j = 0; j < values.size(); ++j) {
        ScenarioConfig cfg = base;
        const std::string& v = values[j];
        try {
            if (key == "N") cfg.N = static_cast<int>(detail::parse_int(v, key, 0));
            else if (key == "L") cfg.L = static_cast<int>(detail::parse_int(v, key, 0));
            else if (key == "K") cfg.K = static_cast<int>(detail::parse_int(v, key, 0));
            else {
                if (detail::lower(v) == "noise_free") cfg.noise_free = true;
                else {
                    cfg.noise_free = false;
                    cfg.snr_in_db = detail::parse_real(v, key, 0);
                }
            }
        } catch (const ConfigError&) {
            throw ConfigError("run_sweep: bad value '" + v + "' for key " + key);
        }
        if (cfg.N < 1) throw ConfigError("run_sweep: N must be >= 1");
        if (cfg.L < 2 || cfg.L % 2) throw ConfigError("run_sweep: L must be even and >= 2");
        if (cfg.K < 1) throw ConfigError("run_sweep: K must be >= 1");
        if (!(key == "N" && base.nested_antennas))
            cfg.master_seed = derive_seed(base.master_seed, 1000 + j);
        out.push_back(run_scenario(cfg));
    }
    return out;
}

namespace detail {

inline std::string fmt_db(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace detail

// Deterministic CSV: scenario echo as leading comments, fixed header, one row
// per (subcarrier, user) with the trial-mean values.
inline std::string result_to_csv(const ResultTable& table) {
    std::ostringstream out;
    out << "# cmtsim_result_version = " << table.format_version << "\n";
    std::istringstream echo(config_echo(table.config));
    std::string line;
    while (std::getline(echo, line)) out << "# " << line << "\n";
    out << "subcarrier,user,theory_mf_db,theory_mmse_db,sim_mf_db,sim_mmse_db\n";
    for (int k = 0; k < table.agg.L; ++k)
        for (int l = 0; l < table.agg.K; ++l) {
            out << k << ',' << l << ',' << detail::fmt_db(table.agg.cell(table.agg.theory_mf, k, l).mean_db)
                << ',' << detail::fmt_db(table.agg.cell(table.agg.theory_mmse, k, l).mean_db) << ','
                << detail::fmt_db(table.agg.cell(table.agg.sim_mf, k, l).mean_db) << ','
                << detail::fmt_db(table.agg.cell(table.agg.sim_mmse, k, l).mean_db) << "\n";
        }
    return out.str();
}

inline void write_csv(const ResultTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    out << result_to_csv(table);
    if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

// Reader for the result CSV (round-trip checks and downstream tooling).
struct ParsedResultCsv {
    std::map<std::string, std::string> echo;
    std::vector<std::array<double, 4>> cells; // k-major, inf allowed
    int L = 0, K = 0;
};

inline ParsedResultCsv read_result_csv(const std::string& text) {
    ParsedResultCsv res;
    std::istringstream in(text);
    std::string line;
    int max_k = -1, max_l = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string body = detail::trim(line.substr(1));
            const auto eq = body.find('=');
            if (eq != std::string::npos)
                res.echo[detail::trim(body.substr(0, eq))] = detail::trim(body.substr(eq + 1));
            continue;
        }
        if (line.rfind("subcarrier,", 0) == 0) continue;
        std::istringstream row(line);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(row, tok, ',')) toks.push_back(tok);
        if (toks.size() != 6) throw std::runtime_error("read_result_csv: malformed row: " + line);
        const int k = std::stoi(toks[0]);
        const int l = std::stoi(toks[1]);
        max_k = std::max(max_k, k);
        max_l = std::max(max_l, l);
        std::array<double, 4> vals{};
        for (int c = 0; c < 4; ++c) {
            const std::string& s = toks[c + 2];
            if (s == "inf") vals[c] = std::numeric_limits<double>::infinity();
            else if (s == "-inf") vals[c] = -std::numeric_limits<double>::infinity();
            else vals[c] = std::stod(s);
        }
        res.cells.push_back(vals);
    }
    res.L = max_k + 1;
    res.K = max_l + 1;
    return res;
}

// Linear-domain mean over all (k, l) cells of one column, in dB.
inline double mean_column_db(const std::vector<AggregatedCell>& cells) {
    double acc = 0.0;
    int n = 0;
    for (const auto& c : cells) {
        if (std::isinf(c.mean_db)) return std::numeric_limits<double>::infinity();
        acc += from_db(c.mean_db);
        ++n;
    }
    return to_db(acc / n);
}

// ---------------------------------------------------------------------------
// Selftest: a fast battery of the library's exact contracts. The SINR hook
// exists so tests can prove the battery catches a corrupted implementation.

struct SelftestHooks {
    std::function<Eigen::VectorXd(const StackedSystem&)> sinr_mf = [](const StackedSystem& s) {
        return sinr_mf_theory(s);
    };
};

inline bool selftest(std::ostream& out, const SelftestHooks& hooks = SelftestHooks{}) {
    int failures = 0;
    const auto check = [&](const char* name, bool ok) {
        out << (ok ? "ok   " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };

    try {
        // prototype_filter
        const PrototypeFilter f = design_prototype(16, 4);
        bool sym = true;
        for (std::size_t i = 0; i < f.coefficients.size(); ++i)
            sym = sym && f.coefficients[i] == f.coefficients[f.coefficients.size() - 1 - i];
        check("prototype symmetry exact", sym);
        double e = 0.0;
        for (double v : f.coefficients) e += v * v;
        check("prototype unit energy", std::abs(e - 1.0) <= 1e-12);
        check("prototype nyquist residual", nyquist_residual(f) <= 1e-3);
        check("prototype deterministic", design_prototype(16, 4).coefficients == f.coefficients);
        std::vector<double> rect(16, 1.0);
        check("rectangle nyquist residual zero", nyquist_residual(rect, 16) == 0.0);
        std::vector<double> impulse{1.0};
        check("impulse nyquist residual zero", nyquist_residual(impulse, 4) == 0.0);

        // cmt_modem round trip and fast-path agreement
        const int L = 16, T = 116, O = 4;
        Rng rng(123);
        const PamGrid grid = random_pam_grid(L, T, pam_alphabet(4), rng);
        const BasebandSignal direct = cmt_modulate(grid, f);
        const BasebandSignal fast = cmt_modulate_fast(grid, f);
        double dmax = 0.0;
        for (std::size_t i = 0; i < direct.samples.size(); ++i)
            dmax = std::max(dmax, std::abs(direct.samples[i] - fast.samples[i]));
        check("fast synthesis matches direct", dmax <= 1e-9);
        const SubcarrierOutputs yd = cmt_demodulate(direct, f, L, T);
        const SubcarrierOutputs yf = cmt_demodulate_fast(direct, f, L, T);
        double amax = 0.0;
        for (std::size_t i = 0; i < yd.v.size(); ++i) amax = std::max(amax, std::abs(yd.v[i] - yf.v[i]));
        check("fast analysis matches direct", amax <= 1e-9);
        bool sir_ok = true;
        for (int k = 0; k < L; ++k) {
            std::vector<double> est(T - 2 * O), ref(T - 2 * O);
            for (int n = 0; n < T - 2 * O; ++n) {
                est[n] = yd.at(k, O + n).real();
                ref[n] = grid.symbols.at(k, O + n);
            }
            const SinrEstimate s = measure_sinr(est, ref);
            sir_ok = sir_ok && (s.infinite || s.db() >= 50.0);
        }
        check("round-trip SIR >= 50 dB", sir_ok);

        // ofdm
        {
            ComplexGrid g(16, 8);
            Rng r2(9);
            for (auto& v : g.v) v = {r2.gaussian(), r2.gaussian()};
            const BasebandSignal s = ofdm_modulate(g, 16, 4);
            const ComplexGrid back = ofdm_demodulate(s, 16, 4, 8);
            double err = 0.0;
            for (std::size_t i = 0; i < g.v.size(); ++i) err = std::max(err, std::abs(g.v[i] - back.v[i]));
            check("ofdm ideal round trip", err <= 1e-12);
        }

        // channel_model
        const ChannelSet ch = realize_sui4(1, 1, 2.8e6, 42);
        check("sui4 tap delays {0,4,11}",
              ch.max_delay == 11 && ch.link(0, 0)[0] != std::complex<double>(0.0, 0.0) &&
                  ch.link(0, 0)[4] != std::complex<double>(0.0, 0.0) &&
                  ch.link(0, 0)[11] != std::complex<double>(0.0, 0.0) &&
                  ch.link(0, 0)[1] == std::complex<double>(0.0, 0.0));
        check("sui4 deterministic", realize_sui4(1, 1, 2.8e6, 42).link(0, 0) == ch.link(0, 0));
        check("sui4 timing reference", timing_reference(ch) == 2);

        // detectors
        Eigen::MatrixXcd H(1, 1);
        H(0, 0) = std::complex<double>(1.0, 1.0);
        const StackedSystem tiny = stack_real(H, 0.1);
        check("stacking h=1+j", tiny.A(0, 0) == 1.0 && tiny.A(1, 0) == 1.0 && tiny.A(0, 1) == -1.0 &&
                                    tiny.A(1, 1) == 1.0);
        Rng r3(7);
        Eigen::MatrixXcd H2(4, 2);
        for (int i = 0; i < 4; ++i)
            for (int l = 0; l < 2; ++l) H2(i, l) = r3.gaussian_complex_unit();
        const StackedSystem sys = stack_real(H2, 0.1);
        double ortho = 0.0, norms = 0.0;
        for (int l = 0; l < 2; ++l) {
            ortho = std::max(ortho, std::abs(sys.Ht().col(l).dot(sys.Hb().col(l))));
            norms = std::max(norms, std::abs(sys.Ht().col(l).norm() - sys.Hb().col(l).norm()));
        }
        check("stacking self-orthogonality", ortho <= 1e-14 && norms <= 1e-14);
        const Eigen::MatrixXd wd =
            (mf_as_simplified_mmse(sys).W - mf_weights(sys).W).cwiseAbs();
        check("simplified MMSE equals MF", wd.maxCoeff() <= 1e-12);
        // independent expansion of the MF SINR formula on a pinned instance
        Eigen::VectorXd ref_sinr(2);
        for (int l = 0; l < 2; ++l) {
            const Eigen::VectorXd h = sys.Ht().col(l);
            const int other = 1 - l;
            const double a = h.dot(sys.Ht().col(other));
            const double b = h.dot(sys.Hb().col(other));
            ref_sinr[l] = std::pow(h.squaredNorm(), 2) / (a * a + b * b + 0.1 * h.squaredNorm());
        }
        const Eigen::VectorXd got = hooks.sinr_mf(sys);
        check("MF SINR closed form", (got - ref_sinr).cwiseAbs().maxCoeff() <= 1e-12 * ref_sinr.maxCoeff());

        // blind_eq
        check("godard R {+-1} p=2", godard_R({-1.0, 1.0}, 2) == 1.0);
        check("godard R {+-1,+-3} p=2", std::abs(godard_R({-3.0, -1.0, 1.0, 3.0}, 2) - 8.2) <= 1e-12);
        {
            GodardParams gp;
            gp.R = 1.0;
            const std::complex<double> w0(1.0, 0.0), u(0.0, 1.0); // |w0*u| = 1 exactly
            check("godard step fixed point", godard_step(w0, u, gp) == w0);
            check("godard step zero input", godard_step(w0, {0.0, 0.0}, gp) == w0);
        }

        // metrics
        {
            std::vector<double> s(128), twice(128);
            Rng r4(11);
            for (std::size_t i = 0; i < s.size(); ++i) {
                s[i] = r4.pick(std::vector<double>{-1.0, 1.0});
                twice[i] = 2.0 * s[i];
            }
            check("measure_sinr exact estimate", measure_sinr(s, s).infinite);
            check("measure_sinr scale invariance", measure_sinr(twice, s).infinite);
        }

        // harness config handling
        {
            const char* minimal =
                "modem = cmt\nL = 16\nO = 4\nN = 2\nK = 1\ndetector = both\nchannel = identity\n"
                "snr_in_db = 10\nnum_symbols = 116\nnum_trials = 1\nmaster_seed = 1\nalphabet = 2pam\n";
            const ScenarioConfig c = parse_config(minimal);
            check("config parse minimal", c.L == 16 && c.N == 2 && !c.noise_free);
            bool unknown_caught = false;
            try {
                parse_config(std::string(minimal) + "bogus = 1\n");
            } catch (const ConfigError&) {
                unknown_caught = true;
            }
            check("config rejects unknown key", unknown_caught);
            bool odd_caught = false;
            try {
                parse_config(std::string("modem = cmt\nL = 33\nO = 4\nN = 2\nK = 1\ndetector = both\n"
                                         "channel = identity\nsnr_in_db = 10\nnum_symbols = 116\n"
                                         "num_trials = 1\nmaster_seed = 1\nalphabet = 2pam\n"));
            } catch (const ConfigError&) {
                odd_caught = true;
            }
            check("config rejects odd L", odd_caught);
        }
    } catch (const std::exception& e) {
        out << "FAIL selftest aborted: " << e.what() << "\n";
        ++failures;
    }

    out << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures == 0;
}

} // namespace cmtsim
