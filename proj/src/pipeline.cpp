#include "pairforge/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <string>

#include "pairforge/detector.hpp"
#include "pairforge/rng.hpp"

namespace pairforge {

namespace {

using nlohmann::json;

constexpr std::uint64_t kFanoutTag = 0x66616e00;
constexpr double kSpeedNmThz = 299792.458; // c in nm*THz

void apply_thread_limit() { omp_set_num_threads(effective_threads()); }

std::int64_t accidental_offset_ps(const RunConfig &cfg) {
    double period = cfg.source.mode == EmissionMode::cw ? cfg.source.cw_bin_ps
                                                        : cfg.source.pulse_period_ps();
    return std::llround(period * std::max(cfg.analysis.accidental_period_offset, 1));
}

// Overlap factors of the analyzed channel pair; flat filters when the config
// declares no overlap interval.
OverlapFactors overlap_from_config(const RunConfig &cfg) {
    const AnalysisConfig &an = cfg.analysis;
    if (!an.has_overlap) return {};
    int s = an.overlap_signal_channel, i = an.overlap_idler_channel;
    if (s < 0 || i < 0 || static_cast<std::size_t>(s) >= cfg.source.demux_filters.size() ||
        static_cast<std::size_t>(i) >= cfg.source.demux_filters.size())
        throw ConfigError("analysis.overlap channel has no [[source.demux_filter]] entry");
    return overlap_factors(cfg.source.demux_filters[static_cast<std::size_t>(s)],
                           cfg.source.demux_filters[static_cast<std::size_t>(i)],
                           an.overlap_interval, cfg.source.nu0_thz);
}

const DetectorConfig &detector_at(const RunConfig &cfg, int idx, const char *what) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= cfg.detectors.size())
        throw ConfigError(std::string(what) + " detector index out of range");
    return cfg.detectors[static_cast<std::size_t>(idx)];
}

json to_json(const Estimate &e) {
    return json{{"value", e.value}, {"sigma", e.sigma}, {"valid", e.valid}};
}

json to_json(const OverlapFactors &f) {
    return json{{"eta_s", f.eta_s},
                {"eta_i", f.eta_i},
                {"eta_pair", f.eta_pair},
                {"ratio", f.ratio()}};
}

json report_envelope(const RunConfig &cfg) {
    return json{{"seed", cfg.seed}, {"config", cfg.raw_text}};
}

void write_text_file(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("cannot write '" + path.string() + "'");
}

} // namespace

int effective_threads() {
    int hw = omp_get_num_procs();
    int n = hw;
    if (const char *env = std::getenv("PAIRFORGE_THREADS")) {
        char *end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0) n = std::min<long>(v, hw);
    }
    return std::max(n, 1);
}

SimulateOutput cmd_simulate(const RunConfig &cfg, const std::filesystem::path &out_dir,
                            TagFileFormat format) {
    if (cfg.detectors.empty())
        throw ConfigError("simulate needs at least one [[detector]] entry");
    if (cfg.source.joint_density.values().empty())
        throw ConfigError("simulate needs a [source.joint_density] table");
    if (cfg.source.mode == EmissionMode::pulsed && cfg.source.n_pulses == 0)
        throw ConfigError("simulate needs source.n_pulses > 0");
    if (cfg.source.mode == EmissionMode::cw && !(cfg.source.cw_duration_s > 0.0))
        throw ConfigError("simulate needs source.cw_duration_s > 0");
    if (cfg.source.splitting == Splitting::wavelength_demux) {
        try {
            validate_demux_filters(cfg.source);
        } catch (const std::invalid_argument &e) {
            throw ConfigError(e.what());
        }
    }
    apply_thread_limit();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "'");

    std::vector<PairEmission> emissions = simulate_emissions(cfg.source, Exec::openmp);
    std::vector<std::vector<PhotonArrival>> channels = route_photons(emissions, cfg.source);

    // fan each source channel out over the detectors listening on it: a
    // physical splitter, so every photon reaches exactly one detector
    std::size_t n_det = cfg.detectors.size();
    std::vector<std::vector<std::size_t>> listeners(channels.size());
    for (std::size_t d = 0; d < n_det; ++d) {
        std::size_t ch = cfg.det_source_channel[d];
        if (ch >= channels.size())
            throw ConfigError("detector " + std::to_string(d) + " listens on channel " +
                              std::to_string(ch) + " which the source does not produce");
        listeners[ch].push_back(d);
    }
    std::vector<std::vector<PhotonArrival>> per_det(n_det);
    for (std::size_t ch = 0; ch < channels.size(); ++ch) {
        const auto &fan = listeners[ch];
        if (fan.empty()) continue;
        if (fan.size() == 1) {
            per_det[fan[0]] = std::move(channels[ch]);
            continue;
        }
        Rng rng(derive_seed(cfg.seed, kFanoutTag, ch));
        double p = 1.0 / static_cast<double>(fan.size());
        for (const PhotonArrival &a : channels[ch]) {
            double u = rng.uniform();
            auto pick = std::min(static_cast<std::size_t>(u / p), fan.size() - 1);
            per_det[fan[pick]].push_back(a);
        }
    }

    std::int64_t t_end = cfg.total_time_ps();
    const char *ext = format == TagFileFormat::binary ? ".ptag" : ".csv";

    SimulateOutput out;
    out.n_pairs = emissions.size();
    json det_manifest = json::array();
    for (std::size_t d = 0; d < n_det; ++d) {
        std::vector<TimeTag> tags = detect(per_det[d], cfg.detectors[d], t_end);
        std::filesystem::path file = out_dir / ("tags_det" + std::to_string(d) + ext);
        write_tags(file, tags, format);
        out.tag_files.push_back(file);
        out.n_tags.push_back(tags.size());
        det_manifest.push_back({{"file", file.filename().string()},
                                {"n_tags", tags.size()},
                                {"source_channel", cfg.det_source_channel[d]},
                                {"efficiency", cfg.detectors[d].efficiency},
                                {"dark_rate_hz", cfg.detectors[d].dark_rate_hz}});
    }

    {
        out.truth_file = out_dir / (std::string("truth") + ext);
        TagWriter truth(out.truth_file, format);
        for (const PairEmission &e : emissions)
            truth.write(TimeTag{e.time_ps, kTruthChannelBase});
        truth.close();
    }

    json manifest{{"schema_version", cfg.schema_version},
                  {"seed", cfg.seed},
                  {"format", format == TagFileFormat::binary ? "bin" : "csv"},
                  {"total_time_ps", t_end},
                  {"n_pairs_emitted", out.n_pairs},
                  {"detectors", det_manifest},
                  {"truth_file", out.truth_file.filename().string()},
                  {"config", cfg.raw_text}};
    out.manifest_file = out_dir / "manifest.json";
    write_text_file(out.manifest_file, manifest.dump(2) + "\n");
    return out;
}

AnalysisReport cmd_analyze(const RunConfig &cfg, const std::filesystem::path &tags_a,
                           const std::filesystem::path &tags_b) {
    const AnalysisConfig &an = cfg.analysis;
    const DetectorConfig &det_a = detector_at(cfg, an.pair_a, "analysis.pair");
    const DetectorConfig &det_b = detector_at(cfg, an.pair_b, "analysis.pair");
    double total_s = cfg.total_time_s();
    if (!(total_s > 0.0))
        throw ConfigError("analysis needs the observation time (source.n_pulses or "
                          "source.cw_duration_s)");
    std::int64_t total_ps = cfg.total_time_ps();

    AnalysisReport rep;
    rep.seed = cfg.seed;
    rep.gamma = cfg.source.gamma();
    rep.overlap = overlap_from_config(cfg);

    // pass 1: singles, each stream on its own
    SinglesScanResult sa, sb;
    {
        TagFileReader ra(tags_a);
        sa = scan_singles(ra, an.tau_sel_ps);
        TagFileReader rb(tags_b);
        sb = scan_singles(rb, an.tau_sel_ps);
    }
    // pass 2: prompt coincidences under pair post-selection
    PairScanResult prompt;
    {
        TagFileReader ra(tags_a);
        TagFileReader rb(tags_b);
        prompt = scan_pair(ra, rb, an.tau_sel_ps, an.window_ps, 0);
    }
    // pass 3: identical scan with one stream shifted -> accidentals
    PairScanResult shifted;
    {
        TagFileReader ra(tags_a);
        TagFileReader rb(tags_b);
        shifted = scan_pair(ra, rb, an.tau_sel_ps, an.window_ps, accidental_offset_ps(cfg));
    }

    CountSummary &c = rep.counts;
    c.n1_raw = sa.n_raw;
    c.n2_raw = sb.n_raw;
    c.n1 = sa.n_kept;
    c.n2 = sb.n_kept;
    c.t1_ready_s = static_cast<double>(ready_time_ps(total_ps, sa.n_kept, an.tau_sel_ps)) * 1e-12;
    c.t2_ready_s = static_cast<double>(ready_time_ps(total_ps, sb.n_kept, an.tau_sel_ps)) * 1e-12;
    c.n1_cc = prompt.a.n_kept;
    c.n2_cc = prompt.b.n_kept;
    c.c12 = prompt.coincidences;
    c.acc12 = shifted.coincidences;
    c.t_cc_ready_s =
        static_cast<double>(std::max<std::int64_t>(total_ps - prompt.blocked_ps, 0)) * 1e-12;
    c.total_time_s = total_s;

    rep.r1_raw_hz = static_cast<double>(c.n1_raw) / total_s;
    rep.r2_raw_hz = static_cast<double>(c.n2_raw) / total_s;
    rep.r1_kept_hz = c.t1_ready_s > 0.0 ? static_cast<double>(c.n1) / c.t1_ready_s : 0.0;
    rep.r2_kept_hz = c.t2_ready_s > 0.0 ? static_cast<double>(c.n2) / c.t2_ready_s : 0.0;

    rep.mu_rate = mu_generated_rate(c, rep.gamma, rep.overlap, det_a.dark_rate_hz,
                                    det_b.dark_rate_hz);
    if (cfg.source.mode == EmissionMode::pulsed)
        rep.mu_per_pulse = mu_generated_per_pulse(c, rep.gamma, rep.overlap,
                                                  det_a.dark_rate_hz, det_b.dark_rate_hz,
                                                  cfg.source.repetition_rate_hz);
    else
        rep.mu_per_pulse = {0.0, 0.0, false};

    // heralds and coincidences must come from the same (pair) post-selection,
    // with the herald darks accumulated over the same ready time
    Meas c12_corr = Meas::poisson(static_cast<double>(c.c12)) -
                    Meas::poisson(static_cast<double>(c.acc12));
    Meas n1_corr = Meas::poisson(static_cast<double>(c.n1_cc)) -
                   Meas::exact(det_a.dark_rate_hz * c.t_cc_ready_s);
    Meas n2_corr = Meas::poisson(static_cast<double>(c.n2_cc)) -
                   Meas::exact(det_b.dark_rate_hz * c.t_cc_ready_s);
    rep.heralding_a = heralding_efficiency(c12_corr, n2_corr, det_a.efficiency);
    rep.heralding_b = heralding_efficiency(c12_corr, n1_corr, det_b.efficiency);

    rep.pump_present = cfg.pump.present;
    if (cfg.pump.present && cfg.pump.bandwidth_nm > 0.0) {
        const PumpConfig &pump = cfg.pump;
        double c12_rate = c.t_cc_ready_s > 0.0
                              ? static_cast<double>(c.c12) / c.t_cc_ready_s
                              : 0.0;
        rep.brightness_counts =
            brightness_simple(rep.r1_kept_hz, rep.r2_kept_hz, c12_rate,
                              pump.average_power_mw, total_s, pump.bandwidth_nm);
        rep.brightness_mu = brightness_from_mu(rep.mu_rate, pump.average_power_mw,
                                               pump.bandwidth_nm);
        if (cfg.source.mode == EmissionMode::pulsed) {
            double n_pump = pump_photons_per_pulse(pump.average_power_mw * 1e-3,
                                                   cfg.source.repetition_rate_hz,
                                                   pump.wavelength_nm);
            rep.eta_conv = conversion_efficiency(rep.mu_per_pulse, n_pump);
            // collection bandwidth in THz at the (degenerate) pair wavelength
            double pair_nm = 2.0 * pump.wavelength_nm;
            double bw_thz = kSpeedNmThz * pump.bandwidth_nm / (pair_nm * pair_nm);
            rep.eta_nu_per_thz = spectral_conversion_efficiency(rep.eta_conv, bw_thz);
        } else {
            rep.eta_conv = {0.0, 0.0, false};
            rep.eta_nu_per_thz = {0.0, 0.0, false};
        }
    } else {
        rep.brightness_counts = {0.0, 0.0, false};
        rep.brightness_mu = {0.0, 0.0, false};
        rep.eta_conv = {0.0, 0.0, false};
        rep.eta_nu_per_thz = {0.0, 0.0, false};
    }
    return rep;
}

G2Report cmd_g2(const RunConfig &cfg, const std::filesystem::path &arm1,
                const std::filesystem::path &arm2, const std::filesystem::path &herald) {
    const AnalysisConfig &an = cfg.analysis;
    const DetectorConfig &det_h = detector_at(cfg, an.g2_herald, "analysis.g2_arms");
    double total_s = cfg.total_time_s();
    if (!(total_s > 0.0))
        throw ConfigError("the g2 analysis needs the observation time");

    std::vector<TimeTag> t1 = read_all_tags(arm1);
    std::vector<TimeTag> t2 = read_all_tags(arm2);
    std::vector<TimeTag> th = read_all_tags(herald);
    if (an.tau_sel_ps > 0) {
        t1 = postselect_singles(t1, an.tau_sel_ps);
        t2 = postselect_singles(t2, an.tau_sel_ps);
        th = postselect_singles(th, an.tau_sel_ps);
    }

    G2Report rep;
    rep.total_time_s = total_s;
    rep.prompt = count_triples(t1, t2, th, an.window_ps, 0);
    rep.accidental = count_triples(t1, t2, th, an.window_ps, accidental_offset_ps(cfg));

    double th_ready_s =
        static_cast<double>(ready_time_ps(cfg.total_time_ps(), th.size(), an.tau_sel_ps)) *
        1e-12;
    G2Counts counts;
    counts.c13 = Meas::poisson(static_cast<double>(rep.prompt.c13)) -
                 Meas::poisson(static_cast<double>(rep.accidental.c13));
    counts.c23 = Meas::poisson(static_cast<double>(rep.prompt.c23)) -
                 Meas::poisson(static_cast<double>(rep.accidental.c23));
    counts.c123 = Meas::poisson(static_cast<double>(rep.prompt.c123)) -
                  Meas::poisson(static_cast<double>(rep.accidental.c123));
    counts.n3 = Meas::poisson(static_cast<double>(rep.prompt.n3)) -
                Meas::exact(det_h.dark_rate_hz * th_ready_s);
    rep.g2 = g2_heralded(counts);

    rep.overlap = overlap_from_config(cfg);
    rep.mu_config = cfg.source.mu;

    // herald-photon transmission: splitter fanout share on its source channel,
    // the channel transmission, and the detection efficiency
    std::size_t herald_ch = cfg.det_source_channel[static_cast<std::size_t>(an.g2_herald)];
    std::size_t fan = 0;
    for (std::size_t d = 0; d < cfg.detectors.size(); ++d)
        if (cfg.det_source_channel[d] == herald_ch) ++fan;
    double t_ch = cfg.source.channel_transmissions.empty()
                      ? 1.0
                      : cfg.source.channel_transmissions[herald_ch];
    rep.herald_t_s = det_h.efficiency * t_ch / static_cast<double>(std::max<std::size_t>(fan, 1));
    rep.predicted = g2_predicted(rep.mu_config, rep.overlap, rep.herald_t_s);
    return rep;
}

JsaReport cmd_jsa(const RunConfig &cfg) {
    if (!cfg.jsa.present) throw ConfigError("config has no [jsa] table");
    const JsaSettings &j = cfg.jsa;
    apply_thread_limit();

    Profile pump;
    switch (j.pump_kind) {
    case JsaSettings::PumpKind::gaussian:
        pump = gaussian_pump_from_duration(j.pump_fwhm_ps);
        break;
    case JsaSettings::PumpKind::spectrum_file:
        pump = pump_from_spectrum(load_spectral_function(j.pump_file),
                                  2.0 * cfg.source.nu0_thz);
        break;
    case JsaSettings::PumpKind::temporal_file: {
        SpectralFunction prof = load_spectral_function(j.pump_file);
        std::vector<double> t(prof.grid().n_points);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = prof.grid().point(i);
        pump = pump_from_temporal_intensity(t, prof.values());
        break;
    }
    }

    double first_zero = j.pm_first_zero_thz;
    if (j.pm_length_mm > 0.0)
        first_zero = sinc_first_zero_from_length(j.pm_length_mm, j.pm_dk_slope_rad_per_mm_thz);
    else if (j.pm_intensity_fwhm_thz > 0.0)
        first_zero = sinc_first_zero_from_intensity_fwhm(j.pm_intensity_fwhm_thz,
                                                         j.pm_convention);
    Profile pm = sinc_phase_matching(first_zero, j.pm_convention);

    JsaMatrix jsa = build_jsa(pump, pm, cfg.source.nu0_thz, j.signal, j.idler, Exec::openmp);
    JsaReport rep;
    rep.schmidt = schmidt_decompose(jsa);
    rep.g2_unheralded = g2_unheralded(rep.schmidt.k);
    rep.grid_signal = j.signal.n_points;
    rep.grid_idler = j.idler.n_points;
    return rep;
}

OverlapReport cmd_overlap(const RunConfig &cfg) {
    if (!cfg.analysis.has_overlap)
        throw ConfigError("config has no [analysis.overlap] table");
    OverlapReport rep;
    rep.factors = overlap_from_config(cfg);
    rep.interval = cfg.analysis.overlap_interval;
    return rep;
}

std::string to_json_string(const AnalysisReport &r, const RunConfig &cfg) {
    json doc = report_envelope(cfg);
    doc["kind"] = "analysis";
    doc["counts"] = {{"n1_raw", r.counts.n1_raw},   {"n2_raw", r.counts.n2_raw},
                     {"n1", r.counts.n1},           {"n2", r.counts.n2},
                     {"n1_cc", r.counts.n1_cc},     {"n2_cc", r.counts.n2_cc},
                     {"c12", r.counts.c12},         {"acc12", r.counts.acc12},
                     {"t1_ready_s", r.counts.t1_ready_s},
                     {"t2_ready_s", r.counts.t2_ready_s},
                     {"t_cc_ready_s", r.counts.t_cc_ready_s},
                     {"total_time_s", r.counts.total_time_s}};
    doc["rates_hz"] = {{"r1_raw", r.r1_raw_hz},
                       {"r2_raw", r.r2_raw_hz},
                       {"r1_kept", r.r1_kept_hz},
                       {"r2_kept", r.r2_kept_hz}};
    doc["gamma"] = r.gamma;
    doc["overlap"] = to_json(r.overlap);
    doc["mu_rate_hz"] = to_json(r.mu_rate);
    doc["mu_per_pulse"] = to_json(r.mu_per_pulse);
    doc["heralding_a"] = to_json(r.heralding_a);
    doc["heralding_b"] = to_json(r.heralding_b);
    doc["brightness_counts"] = to_json(r.brightness_counts);
    doc["brightness_mu"] = to_json(r.brightness_mu);
    doc["conversion_efficiency"] = to_json(r.eta_conv);
    doc["spectral_conversion_per_thz"] = to_json(r.eta_nu_per_thz);
    doc["pump_present"] = r.pump_present;
    return doc.dump(2) + "\n";
}

std::string to_json_string(const G2Report &r, const RunConfig &cfg) {
    auto triples = [](const TripleCounts &t) {
        return json{{"c13", t.c13},   {"c23", t.c23}, {"c123", t.c123},
                    {"n1", t.n1},     {"n2", t.n2},   {"n3", t.n3}};
    };
    json doc = report_envelope(cfg);
    doc["kind"] = "g2";
    doc["prompt"] = triples(r.prompt);
    doc["accidental"] = triples(r.accidental);
    doc["total_time_s"] = r.total_time_s;
    doc["g2_heralded"] = to_json(r.g2);
    doc["predicted"] = {{"exact", r.predicted.exact}, {"approx", r.predicted.approx}};
    doc["mu_config"] = r.mu_config;
    doc["overlap"] = to_json(r.overlap);
    doc["herald_transmission"] = r.herald_t_s;
    return doc.dump(2) + "\n";
}

std::string to_json_string(const JsaReport &r, const RunConfig &cfg) {
    json doc = report_envelope(cfg);
    doc["kind"] = "jsa";
    doc["schmidt_number"] = r.schmidt.k;
    doc["g2_unheralded"] = r.g2_unheralded;
    doc["grid"] = {{"signal", r.grid_signal}, {"idler", r.grid_idler}};
    std::size_t n_head = std::min<std::size_t>(r.schmidt.lambda.size(), 32);
    doc["schmidt_lambda_head"] =
        std::vector<double>(r.schmidt.lambda.begin(), r.schmidt.lambda.begin() + n_head);
    return doc.dump(2) + "\n";
}

} // namespace pairforge
