// cmtsim command-line front end.
//
// Exit codes: 0 success, 1 configuration or argument validation error,
// 2 runtime failure, 3 selftest failure.

#include "cmtsim/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

std::string default_out_path(const std::string& config_path) {
    std::filesystem::path p(config_path);
    p.replace_extension(".csv");
    return p.string();
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        const std::string t = cmtsim::detail::trim(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

void print_summary(const cmtsim::ResultTable& table) {
    const auto& cfg = table.config;
    const double mf_sim = cmtsim::mean_column_db(table.agg.sim_mf);
    const double mf_th = cmtsim::mean_column_db(table.agg.theory_mf);
    const double mmse_sim = cmtsim::mean_column_db(table.agg.sim_mmse);
    const double mmse_th = cmtsim::mean_column_db(table.agg.theory_mmse);
    std::printf("L=%d N=%d K=%d trials=%d\n", cfg.L, cfg.N, cfg.K, cfg.num_trials);
    if (cfg.detector != cmtsim::DetectorChoice::MMSE)
        std::printf("  mf    sim %.3f dB  theory %.3f dB\n", mf_sim, mf_th);
    if (cfg.detector != cmtsim::DetectorChoice::MF)
        std::printf("  mmse  sim %.3f dB  theory %.3f dB\n", mmse_sim, mmse_th);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cmtsim: filter-bank multicarrier link simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, dump_channels_path;
    auto* run = app.add_subcommand("run", "run one scenario and write the result CSV");
    run->add_option("config", config_path, "scenario config file")->required();
    run->add_option("--out", out_path, "result CSV path (default: config path with .csv)");
    run->add_option("--dump-channels", dump_channels_path, "also write the trial-0 channel CSV here");

    std::string sweep_config, sweep_key, sweep_values, sweep_prefix;
    auto* sweep = app.add_subcommand("sweep", "run one scenario repeatedly over a value list");
    sweep->add_option("config", sweep_config, "scenario config file")->required();
    sweep->add_option("--key", sweep_key, "config key to sweep (N, L, K, or snr_in_db)")->required();
    sweep->add_option("--values", sweep_values, "comma-separated value list")->required();
    sweep->add_option("--out-prefix", sweep_prefix, "output prefix (default: config stem + '_')");

    auto* selftest = app.add_subcommand("selftest", "run the built-in consistency checks");

    int proto_L = 0, proto_O = 0;
    std::string proto_path;
    auto* exp = app.add_subcommand("export-prototype", "design a prototype filter and write it as CSV");
    exp->add_option("L", proto_L, "number of subcarriers (even)")->required();
    exp->add_option("O", proto_O, "overlap factor (>= 3)")->required();
    exp->add_option("path", proto_path, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) {
            const cmtsim::ScenarioConfig cfg = cmtsim::parse_config_file(config_path);
            const cmtsim::ResultTable table = cmtsim::run_scenario(cfg);
            const std::string out = out_path.empty() ? default_out_path(config_path) : out_path;
            cmtsim::write_csv(table, out);
            if (!dump_channels_path.empty()) {
                std::ofstream ch(dump_channels_path, std::ios::binary);
                if (!ch) throw std::runtime_error("cannot open " + dump_channels_path);
                ch << table.trial0_channel_csv;
            }
            print_summary(table);
            std::printf("wrote %s\n", out.c_str());
            return 0;
        }
        if (sweep->parsed()) {
            const cmtsim::ScenarioConfig cfg = cmtsim::parse_config_file(sweep_config);
            const std::vector<std::string> values = split_csv_list(sweep_values);
            if (values.empty()) throw cmtsim::ConfigError("sweep: --values list is empty");
            const std::vector<cmtsim::ResultTable> tables = cmtsim::run_sweep(cfg, sweep_key, values);
            std::string prefix = sweep_prefix;
            if (prefix.empty()) {
                std::filesystem::path p(sweep_config);
                p.replace_extension("");
                prefix = p.string() + "_";
            }
            for (std::size_t j = 0; j < tables.size(); ++j) {
                const std::string out = prefix + sweep_key + "_" + values[j] + ".csv";
                cmtsim::write_csv(tables[j], out);
                print_summary(tables[j]);
                std::printf("wrote %s\n", out.c_str());
            }
            return 0;
        }
        if (selftest->parsed()) {
            return cmtsim::selftest(std::cout) ? 0 : 3;
        }
        if (exp->parsed()) {
            const cmtsim::PrototypeFilter f = cmtsim::design_prototype(proto_L, proto_O);
            std::ofstream out(proto_path, std::ios::binary);
            if (!out) throw std::runtime_error("cannot open " + proto_path);
            out << cmtsim::prototype_to_csv(f);
            std::printf("wrote %s (%zu coefficients, residual %.3g)\n", proto_path.c_str(),
                        f.coefficients.size(), cmtsim::nyquist_residual(f));
            return 0;
        }
    } catch (const cmtsim::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
