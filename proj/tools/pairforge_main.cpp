// pairforge: Monte Carlo photon-pair source, detector chain and tag analysis.
//
// Subcommands: simulate, analyze, g2, jsa, fit-shg, overlap. Everything reads
// a TOML config (--config) and prints a JSON report to stdout or --out.
#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pairforge/config.hpp"
#include "pairforge/pipeline.hpp"
#include "pairforge/shg.hpp"

namespace {

using nlohmann::json;
using namespace pairforge;

struct CommonOpts {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::int64_t> tau_sel_ps;
    std::optional<std::int64_t> window_ps;
};

void add_common(CLI::App *cmd, CommonOpts &o, bool needs_config = true) {
    auto *cfg = cmd->add_option("-c,--config", o.config_file, "run configuration (TOML)");
    if (needs_config) cfg->required();
    cmd->add_option("--seed", o.seed, "override the master RNG seed");
    cmd->add_option("-o,--out", o.out, "output path ('-' or empty: stdout)");
    cmd->add_option("--tau-sel", o.tau_sel_ps, "post-selection dead time override, ps");
    cmd->add_option("--window", o.window_ps, "coincidence window override, ps");
}

RunConfig load_cfg(const CommonOpts &o) {
    RunConfig cfg = load_run_config(o.config_file);
    if (o.seed) cfg.reseed(*o.seed);
    if (o.tau_sel_ps) {
        if (*o.tau_sel_ps < 0) throw ConfigError("--tau-sel must be >= 0");
        cfg.analysis.tau_sel_ps = *o.tau_sel_ps;
    }
    if (o.window_ps) {
        if (*o.window_ps <= 0) throw ConfigError("--window must be > 0");
        cfg.analysis.window_ps = *o.window_ps;
    }
    return cfg;
}

void emit(const std::string &out, const std::string &text) {
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot open '" + out + "' for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("cannot write '" + out + "'");
}

// two-column numeric file for fit-shg: comments with '#', comma or whitespace
// separators; no resampling, the points are the data
void read_xy(const std::string &path, std::vector<double> &x, std::vector<double> &y) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        for (char &c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream ss(line);
        double a = 0, b = 0;
        if (!(ss >> a)) continue; // blank
        if (!(ss >> b))
            throw IoError(path + ":" + std::to_string(lineno) + ": expected two columns");
        x.push_back(a);
        y.push_back(b);
    }
}

int run(int argc, char **argv) {
    CLI::App app{"photon-pair source simulator and tag analysis"};
    app.require_subcommand(1);

    CommonOpts sim_o, ana_o, g2_o, jsa_o, ovl_o;
    std::string sim_format = "bin";
    auto *sim = app.add_subcommand("simulate", "generate detector tag files");
    add_common(sim, sim_o);
    sim->add_option("--format", sim_format, "tag file format")
        ->check(CLI::IsMember({"bin", "csv"}));

    auto *ana = app.add_subcommand("analyze", "estimate rates, mu, heralding, brightness");
    add_common(ana, ana_o);
    std::string ana_a, ana_b;
    ana->add_option("tags_a", ana_a, "tag file of detector A")->required();
    ana->add_option("tags_b", ana_b, "tag file of detector B")->required();

    auto *g2c = app.add_subcommand("g2", "heralded g2 from two arms and a herald");
    add_common(g2c, g2_o);
    std::string g2_1, g2_2, g2_h;
    g2c->add_option("arm1", g2_1, "tag file of arm 1")->required();
    g2c->add_option("arm2", g2_2, "tag file of arm 2")->required();
    g2c->add_option("herald", g2_h, "tag file of the herald")->required();

    auto *jsa = app.add_subcommand("jsa", "joint amplitude Schmidt analysis");
    add_common(jsa, jsa_o);

    auto *ovl = app.add_subcommand("overlap", "spectral passage factors of a channel pair");
    add_common(ovl, ovl_o);

    auto *fit = app.add_subcommand("fit-shg", "fit the pump doubling response");
    std::string fit_file, fit_out;
    double c0 = ShgParams{}.c, eta0 = ShgParams{}.eta_bk;
    double fit_rep_rate = 0.0, fit_fwhm_ps = 0.0;
    fit->add_option("data", fit_file, "two columns: pump power (W), doubled power (W)")
        ->required();
    fit->add_option("-o,--out", fit_out, "output path ('-' or empty: stdout)");
    fit->add_option("--c0", c0, "initial response coefficient");
    fit->add_option("--eta0", eta0, "initial conversion nonlinearity, 1/W");
    fit->add_option("--rep-rate-hz", fit_rep_rate,
                    "with --pulse-fwhm-ps: first column is average power, convert to peak");
    fit->add_option("--pulse-fwhm-ps", fit_fwhm_ps, "pulse intensity FWHM, ps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e); // prints help or the usage error
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (sim->parsed()) {
        RunConfig cfg = load_cfg(sim_o);
        TagFileFormat fmt = sim_format == "csv" ? TagFileFormat::csv : TagFileFormat::binary;
        std::string out_dir = sim_o.out.empty() || sim_o.out == "-" ? "out" : sim_o.out;
        SimulateOutput so = cmd_simulate(cfg, out_dir, fmt);
        json doc{{"out_dir", out_dir},
                 {"manifest", so.manifest_file.string()},
                 {"truth_file", so.truth_file.string()},
                 {"n_pairs_emitted", so.n_pairs}};
        json files = json::array();
        for (std::size_t i = 0; i < so.tag_files.size(); ++i)
            files.push_back({{"file", so.tag_files[i].string()}, {"n_tags", so.n_tags[i]}});
        doc["detectors"] = files;
        std::cout << doc.dump(2) << "\n";
        return kExitOk;
    }
    if (ana->parsed()) {
        RunConfig cfg = load_cfg(ana_o);
        AnalysisReport rep = cmd_analyze(cfg, ana_a, ana_b);
        emit(ana_o.out, to_json_string(rep, cfg));
        return kExitOk;
    }
    if (g2c->parsed()) {
        RunConfig cfg = load_cfg(g2_o);
        G2Report rep = cmd_g2(cfg, g2_1, g2_2, g2_h);
        emit(g2_o.out, to_json_string(rep, cfg));
        return kExitOk;
    }
    if (jsa->parsed()) {
        RunConfig cfg = load_cfg(jsa_o);
        JsaReport rep = cmd_jsa(cfg);
        emit(jsa_o.out, to_json_string(rep, cfg));
        return kExitOk;
    }
    if (ovl->parsed()) {
        RunConfig cfg = load_cfg(ovl_o);
        OverlapReport rep = cmd_overlap(cfg);
        json doc{{"seed", cfg.seed},
                 {"eta_s", rep.factors.eta_s},
                 {"eta_i", rep.factors.eta_i},
                 {"eta_pair", rep.factors.eta_pair},
                 {"ratio", rep.factors.ratio()},
                 {"interval",
                  {{"center_thz", rep.interval.center_thz},
                   {"span_thz", rep.interval.span_thz},
                   {"n_points", rep.interval.n_points}}}};
        emit(ovl_o.out, doc.dump(2) + "\n");
        return kExitOk;
    }
    if (fit->parsed()) {
        std::vector<double> x, y;
        read_xy(fit_file, x, y);
        if ((fit_rep_rate > 0.0) != (fit_fwhm_ps > 0.0))
            throw ConfigError("--rep-rate-hz and --pulse-fwhm-ps go together");
        if (fit_rep_rate > 0.0)
            for (double &p : x) p = peak_from_average_w(p, fit_rep_rate, fit_fwhm_ps * 1e-12);
        ShgFitResult res = fit_shg(x, y, ShgParams{c0, eta0});
        json doc{{"c", res.params.c},
                 {"eta_bk_per_w", res.params.eta_bk},
                 {"rss", res.rss},
                 {"iterations", res.iterations},
                 {"converged", res.converged},
                 {"n_points", x.size()}};
        emit(fit_out, doc.dump(2) + "\n");
        return kExitOk;
    }
    return kExitUsage;
}

} // namespace

int main(int argc, char **argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError &e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
