#pragma once
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pairforge/detector.hpp"
#include "pairforge/errors.hpp"
#include "pairforge/jsa.hpp"
#include "pairforge/source.hpp"

namespace pairforge {

struct AnalysisConfig {
    std::int64_t tau_sel_ps = 40'000'000;
    std::int64_t window_ps = 500;
    int accidental_period_offset = 1; // shifted window at k pulse periods
    int pair_a = 0, pair_b = 1;       // detector indices of the coincidence pair

    bool has_g2 = false;
    int g2_arm1 = 0, g2_arm2 = 1, g2_herald = 2;

    // overlap factors of the analyzed channel pair; absent = flat filters
    bool has_overlap = false;
    FrequencyGrid overlap_interval; // centered on the pair offset f, THz
    int overlap_signal_channel = 0;
    int overlap_idler_channel = 1;
};

struct PumpConfig {
    bool present = false;
    double average_power_mw = 0.0;
    double wavelength_nm = 775.0;
    double bandwidth_nm = 0.0;
};

struct JsaSettings {
    bool present = false;
    enum class PumpKind { gaussian, spectrum_file, temporal_file } pump_kind = PumpKind::gaussian;
    double pump_fwhm_ps = 400.0;
    std::string pump_file;
    SincConvention pm_convention = SincConvention::amplitude;
    // exactly one of: first zero directly, crystal length+slope, intensity FWHM
    double pm_first_zero_thz = 0.0;
    double pm_length_mm = 0.0;
    double pm_dk_slope_rad_per_mm_thz = 0.0;
    double pm_intensity_fwhm_thz = 0.0;
    FrequencyGrid signal, idler;
};

struct RunConfig {
    int schema_version = 1;
    std::uint64_t seed = 1;
    SourceConfig source;
    std::vector<DetectorConfig> detectors;
    std::vector<std::uint16_t> det_source_channel; // which source output feeds each detector
    AnalysisConfig analysis;
    PumpConfig pump;
    JsaSettings jsa;
    std::string raw_text; // original config text, embedded in reports

    double total_time_s() const;
    std::int64_t total_time_ps() const;

    // re-derives all substream seeds from a new master seed (--seed override)
    void reseed(std::uint64_t master);
};

// TOML-subset loader: [table], [table.sub], [[array-of-table]], key = value
// with strings, integers, floats, booleans and flat arrays, '#' comments.
// Errors are ConfigError with file:line positions.
RunConfig load_run_config(const std::filesystem::path &file);
RunConfig parse_run_config(const std::string &text, const std::string &name = "<config>");

} // namespace pairforge
