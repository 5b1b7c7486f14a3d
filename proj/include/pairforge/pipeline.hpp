#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include "pairforge/config.hpp"
#include "pairforge/estimators.hpp"
#include "pairforge/tagproc.hpp"

namespace pairforge {

// simulate -> detect -> tag files on disk
struct SimulateOutput {
    std::vector<std::filesystem::path> tag_files; // one per detector
    std::filesystem::path truth_file;             // pair emission times, truth channel
    std::filesystem::path manifest_file;
    std::uint64_t n_pairs = 0;
    std::vector<std::uint64_t> n_tags;
};

SimulateOutput cmd_simulate(const RunConfig &cfg, const std::filesystem::path &out_dir,
                            TagFileFormat format = TagFileFormat::binary);

// tag files -> estimates (the recover side of the loop)
struct AnalysisReport {
    CountSummary counts;
    double r1_raw_hz = 0, r2_raw_hz = 0;     // raw click rates
    double r1_kept_hz = 0, r2_kept_hz = 0;   // post-selected rates over ready time
    double gamma = 1.0;
    OverlapFactors overlap;
    Estimate mu_rate;        // pairs/s
    Estimate mu_per_pulse;
    Estimate heralding_a;    // heralding efficiency of arm A (heralded by B)
    Estimate heralding_b;
    Estimate brightness_counts; // N1 N2/(C12 P t dl) route
    Estimate eta_conv;
    Estimate eta_nu_per_thz;
    Estimate brightness_mu;  // mu-rate route
    bool pump_present = false;
    std::uint64_t seed = 0;
};

AnalysisReport cmd_analyze(const RunConfig &cfg, const std::filesystem::path &tags_a,
                           const std::filesystem::path &tags_b);

struct G2Report {
    TripleCounts prompt;
    TripleCounts accidental;
    double total_time_s = 0;
    Estimate g2;
    G2Prediction predicted; // at the configured mu
    double mu_config = 0;
    OverlapFactors overlap;
    double herald_t_s = 0; // non-spectral herald transmission used in `exact`
};

G2Report cmd_g2(const RunConfig &cfg, const std::filesystem::path &arm1,
                const std::filesystem::path &arm2, const std::filesystem::path &herald);

struct JsaReport {
    SchmidtSpectrum schmidt;
    double g2_unheralded = 0;
    std::size_t grid_signal = 0, grid_idler = 0;
};

JsaReport cmd_jsa(const RunConfig &cfg);

struct OverlapReport {
    OverlapFactors factors;
    FrequencyGrid interval;
};

OverlapReport cmd_overlap(const RunConfig &cfg);

// JSON renderings (reports embed the config text and seed)
std::string to_json_string(const AnalysisReport &, const RunConfig &);
std::string to_json_string(const G2Report &, const RunConfig &);
std::string to_json_string(const JsaReport &, const RunConfig &);

// effective OpenMP parallelism: min(hardware, PAIRFORGE_THREADS if set)
int effective_threads();

} // namespace pairforge
