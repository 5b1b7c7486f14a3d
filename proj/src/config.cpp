#include "pairforge/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include "pairforge/rng.hpp"

namespace pairforge {

namespace {

constexpr std::uint64_t kSeedSourceTag = 0x73726300; // substream tags off the master seed
constexpr std::uint64_t kSeedDetectorTag = 0x64657400;

// ---------------------------------------------------------------- parsing --

struct Value {
    enum class Kind { str, integer, real, boolean, array };
    Kind kind = Kind::str;
    std::string s;
    std::int64_t i = 0;
    double d = 0.0;
    bool b = false;
    std::vector<Value> items;
    int line = 0;
};

struct ParsedFile {
    std::string name;
    std::map<std::string, Value> values;         // dotted path -> value
    std::map<std::string, std::size_t> aot;      // array-of-tables counts
    std::set<std::string> headers;               // table headers seen
};

[[noreturn]] void fail_at(const std::string &name, int line, const std::string &msg) {
    throw ConfigError(name + ":" + std::to_string(line) + ": " + msg);
}

bool is_bare_key(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
            return false;
    return s.front() != '.' && s.back() != '.' && s.find("..") == std::string_view::npos;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string decode_string(const std::string &name, int line, std::string_view body) {
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c != '\\') {
            out.push_back(c);
            continue;
        }
        if (++i >= body.size()) fail_at(name, line, "dangling escape in string");
        switch (body[i]) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        default: fail_at(name, line, std::string("unsupported escape \\") + body[i]);
        }
    }
    return out;
}

Value parse_scalar(const std::string &name, int line, std::string_view sv);

Value parse_value(const std::string &name, int line, std::string_view sv) {
    sv = trim(sv);
    if (sv.empty()) fail_at(name, line, "missing value");
    if (sv.front() == '[') {
        if (sv.back() != ']') fail_at(name, line, "array must close on the same line");
        Value arr;
        arr.kind = Value::Kind::array;
        arr.line = line;
        std::string_view body = trim(sv.substr(1, sv.size() - 2));
        while (!body.empty()) {
            // split on the next comma outside a string
            bool in_str = false;
            std::size_t cut = body.size();
            for (std::size_t i = 0; i < body.size(); ++i) {
                char c = body[i];
                if (in_str) {
                    if (c == '\\') ++i;
                    else if (c == '"') in_str = false;
                } else if (c == '"') {
                    in_str = true;
                } else if (c == '[') {
                    fail_at(name, line, "nested arrays are not supported");
                } else if (c == ',') {
                    cut = i;
                    break;
                }
            }
            std::string_view item = trim(body.substr(0, cut));
            if (!item.empty()) arr.items.push_back(parse_scalar(name, line, item));
            else if (cut != body.size()) fail_at(name, line, "empty array element");
            body = cut == body.size() ? std::string_view{} : trim(body.substr(cut + 1));
        }
        return arr;
    }
    return parse_scalar(name, line, sv);
}

Value parse_scalar(const std::string &name, int line, std::string_view sv) {
    Value v;
    v.line = line;
    if (sv.front() == '"') {
        bool in = true;
        std::size_t end = sv.size();
        for (std::size_t i = 1; i < sv.size(); ++i) {
            if (sv[i] == '\\') ++i;
            else if (sv[i] == '"') {
                end = i;
                in = false;
                break;
            }
        }
        if (in) fail_at(name, line, "unterminated string");
        if (!trim(sv.substr(end + 1)).empty())
            fail_at(name, line, "trailing characters after string");
        v.kind = Value::Kind::str;
        v.s = decode_string(name, line, sv.substr(1, end - 1));
        return v;
    }
    if (sv == "true" || sv == "false") {
        v.kind = Value::Kind::boolean;
        v.b = sv == "true";
        return v;
    }
    std::string num;
    num.reserve(sv.size());
    for (char c : sv)
        if (c != '_') num.push_back(c);
    if (!num.empty() && num.front() == '+') num.erase(num.begin());
    bool floaty = num.find_first_of(".eE") != std::string::npos;
    if (!floaty) {
        std::int64_t iv = 0;
        auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), iv);
        if (ec == std::errc() && p == num.data() + num.size()) {
            v.kind = Value::Kind::integer;
            v.i = iv;
            v.d = static_cast<double>(iv);
            return v;
        }
    }
    double dv = 0.0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), dv);
    if (ec != std::errc() || p != num.data() + num.size() || !std::isfinite(dv))
        fail_at(name, line, "cannot parse value '" + std::string(sv) + "'");
    v.kind = Value::Kind::real;
    v.d = dv;
    return v;
}

ParsedFile parse_text(const std::string &text, const std::string &name) {
    ParsedFile pf;
    pf.name = name;
    std::string prefix;
    int line = 0;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        ++line;
        // strip comment outside strings
        bool in_str = false;
        std::size_t cut = raw.size();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            char c = raw[i];
            if (in_str) {
                if (c == '\\') ++i;
                else if (c == '"') in_str = false;
            } else if (c == '"') {
                in_str = true;
            } else if (c == '#') {
                cut = i;
                break;
            }
        }
        std::string_view sv = trim(std::string_view(raw).substr(0, cut));
        if (sv.empty()) continue;

        if (sv.size() >= 4 && sv.substr(0, 2) == "[[") {
            if (sv.substr(sv.size() - 2) != "]]")
                fail_at(name, line, "malformed table-array header");
            std::string_view inner = trim(sv.substr(2, sv.size() - 4));
            if (!is_bare_key(inner))
                fail_at(name, line, "invalid table-array name '" + std::string(inner) + "'");
            std::size_t idx = pf.aot[std::string(inner)]++;
            prefix = std::string(inner) + "." + std::to_string(idx);
            pf.headers.insert(prefix);
            continue;
        }
        if (sv.front() == '[') {
            if (sv.back() != ']') fail_at(name, line, "malformed table header");
            std::string_view inner = trim(sv.substr(1, sv.size() - 2));
            if (!is_bare_key(inner))
                fail_at(name, line, "invalid table name '" + std::string(inner) + "'");
            prefix = std::string(inner);
            pf.headers.insert(prefix);
            continue;
        }

        std::size_t eq = std::string::npos;
        in_str = false;
        for (std::size_t i = 0; i < sv.size(); ++i) {
            char c = sv[i];
            if (in_str) {
                if (c == '\\') ++i;
                else if (c == '"') in_str = false;
            } else if (c == '"') {
                in_str = true;
            } else if (c == '=') {
                eq = i;
                break;
            }
        }
        if (eq == std::string::npos) fail_at(name, line, "expected 'key = value'");
        std::string_view key = trim(sv.substr(0, eq));
        if (!is_bare_key(key)) fail_at(name, line, "invalid key '" + std::string(key) + "'");
        std::string full = prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
        if (pf.values.count(full)) fail_at(name, line, "duplicate key '" + full + "'");
        pf.values.emplace(full, parse_value(name, line, sv.substr(eq + 1)));
    }
    return pf;
}

// ---------------------------------------------------------------- binding --

class Binder {
  public:
    Binder(const ParsedFile &pf, std::filesystem::path base_dir)
        : pf_(pf), base_(std::move(base_dir)) {}

    bool has(const std::string &key) const { return pf_.values.count(key) != 0; }

    bool table_present(const std::string &prefix) const {
        if (pf_.headers.count(prefix)) return true;
        auto it = pf_.values.lower_bound(prefix + ".");
        return it != pf_.values.end() && it->first.rfind(prefix + ".", 0) == 0;
    }

    std::size_t table_array_count(const std::string &name) const {
        auto it = pf_.aot.find(name);
        return it == pf_.aot.end() ? 0 : it->second;
    }

    const Value *find(const std::string &key) const {
        auto it = pf_.values.find(key);
        if (it == pf_.values.end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    const Value &require(const std::string &key) const {
        const Value *v = find(key);
        if (!v) throw ConfigError(pf_.name + ": missing required key '" + key + "'");
        return *v;
    }

    double number(const std::string &key, double fallback) const {
        const Value *v = find(key);
        return v ? as_number(key, *v) : fallback;
    }
    double number(const std::string &key) const { return as_number(key, require(key)); }

    std::int64_t integer(const std::string &key, std::int64_t fallback) const {
        const Value *v = find(key);
        return v ? as_integer(key, *v) : fallback;
    }
    std::int64_t integer(const std::string &key) const { return as_integer(key, require(key)); }

    std::string str(const std::string &key, const std::string &fallback) const {
        const Value *v = find(key);
        return v ? as_string(key, *v) : fallback;
    }
    std::string str(const std::string &key) const { return as_string(key, require(key)); }

    std::vector<double> number_array(const std::string &key) const {
        const Value &v = require(key);
        if (v.kind != Value::Kind::array) key_fail(key, v, "expected an array");
        std::vector<double> out;
        for (const Value &item : v.items) out.push_back(as_number(key, item));
        return out;
    }

    std::vector<std::int64_t> integer_array(const std::string &key) const {
        const Value &v = require(key);
        if (v.kind != Value::Kind::array) key_fail(key, v, "expected an array");
        std::vector<std::int64_t> out;
        for (const Value &item : v.items) out.push_back(as_integer(key, item));
        return out;
    }

    std::filesystem::path resolve(const std::string &rel) const {
        std::filesystem::path p(rel);
        return p.is_absolute() || base_.empty() ? p : base_ / p;
    }

    void check_all_consumed() const {
        for (const auto &[key, value] : pf_.values)
            if (!used_.count(key))
                fail_at(pf_.name, value.line, "unknown key '" + key + "'");
    }

    const std::string &file_name() const { return pf_.name; }

  private:
    [[noreturn]] void key_fail(const std::string &key, const Value &v,
                               const std::string &msg) const {
        fail_at(pf_.name, v.line, "key '" + key + "': " + msg);
    }
    double as_number(const std::string &key, const Value &v) const {
        if (v.kind != Value::Kind::integer && v.kind != Value::Kind::real)
            key_fail(key, v, "expected a number");
        return v.d;
    }
    std::int64_t as_integer(const std::string &key, const Value &v) const {
        if (v.kind != Value::Kind::integer) key_fail(key, v, "expected an integer");
        return v.i;
    }
    std::string as_string(const std::string &key, const Value &v) const {
        if (v.kind != Value::Kind::str) key_fail(key, v, "expected a string");
        return v.s;
    }

    const ParsedFile &pf_;
    std::filesystem::path base_;
    mutable std::set<std::string> used_;
};

FrequencyGrid bind_grid(const Binder &b, const std::string &prefix) {
    FrequencyGrid g;
    g.center_thz = b.number(prefix + ".center_thz");
    g.span_thz = b.number(prefix + ".span_thz");
    std::int64_t n = b.integer(prefix + ".n_points");
    if (n < 2 || !(g.span_thz > 0.0))
        throw ConfigError(b.file_name() + ": grid '" + prefix +
                          "' needs span_thz > 0 and n_points >= 2");
    g.n_points = static_cast<std::size_t>(n);
    return g;
}

// Sampled spectral shape: flat, gaussian, supergauss (even order), or a
// two-column table file.
SpectralFunction bind_spectral(const Binder &b, const std::string &prefix) {
    std::string shape = b.str(prefix + ".shape", "flat");
    if (shape == "table") {
        std::string file = b.str(prefix + ".file");
        return load_spectral_function(b.resolve(file));
    }
    FrequencyGrid grid = bind_grid(b, prefix);
    double peak = b.number(prefix + ".peak", 1.0);
    if (!(peak >= 0.0))
        throw ConfigError(b.file_name() + ": '" + prefix + ".peak' must be >= 0");
    if (shape == "flat") return SpectralFunction::flat(grid, peak);
    double fwhm = b.number(prefix + ".fwhm_thz");
    if (!(fwhm > 0.0))
        throw ConfigError(b.file_name() + ": '" + prefix + ".fwhm_thz' must be > 0");
    double order = 2.0;
    if (shape == "gaussian") {
        // order stays 2
    } else if (shape == "supergauss") {
        order = static_cast<double>(b.integer(prefix + ".order"));
        if (order < 2.0 || std::fmod(order, 2.0) != 0.0)
            throw ConfigError(b.file_name() + ": '" + prefix +
                              ".order' must be an even integer >= 2");
    } else {
        throw ConfigError(b.file_name() + ": '" + prefix + ".shape' unknown shape '" + shape +
                          "'");
    }
    double c = grid.center_thz;
    double ln2 = 0.69314718055994530942;
    return SpectralFunction::tabulate(grid, [=](double f) {
        return peak * std::exp(-ln2 * std::pow(std::abs(2.0 * (f - c) / fwhm), order));
    });
}

RunConfig bind_config(const ParsedFile &pf, const std::filesystem::path &base_dir,
               const std::string &raw_text) {
    Binder b(pf, base_dir);
    RunConfig cfg;
    cfg.raw_text = raw_text;

    cfg.schema_version = static_cast<int>(b.integer("schema_version", 1));
    if (cfg.schema_version != 1)
        throw ConfigError(pf.name + ": unsupported schema_version " +
                          std::to_string(cfg.schema_version));
    std::int64_t seed = b.integer("seed", 1);
    if (seed < 0) throw ConfigError(pf.name + ": seed must be >= 0");

    // ---- source
    SourceConfig &src = cfg.source;
    std::string mode = b.str("source.mode", "pulsed");
    if (mode == "pulsed") src.mode = EmissionMode::pulsed;
    else if (mode == "cw") src.mode = EmissionMode::cw;
    else throw ConfigError(pf.name + ": source.mode must be \"pulsed\" or \"cw\"");
    src.repetition_rate_hz = b.number("source.repetition_rate_hz", src.repetition_rate_hz);
    src.pulse_duration_ps = b.number("source.pulse_duration_ps", src.pulse_duration_ps);
    src.mu = b.number("source.mu", src.mu);
    std::int64_t n_pulses = b.integer("source.n_pulses", 0);
    if (n_pulses < 0) throw ConfigError(pf.name + ": source.n_pulses must be >= 0");
    src.n_pulses = static_cast<std::uint64_t>(n_pulses);
    src.cw_pair_rate_hz = b.number("source.cw_pair_rate_hz", src.cw_pair_rate_hz);
    src.cw_bin_ps = b.number("source.cw_bin_ps", src.cw_bin_ps);
    src.cw_duration_s = b.number("source.cw_duration_s", src.cw_duration_s);
    src.nu0_thz = b.number("source.nu0_thz", src.nu0_thz);

    if (b.table_present("source.joint_density"))
        src.joint_density = bind_spectral(b, "source.joint_density");

    std::string split = b.str("source.splitting", "deterministic");
    if (split == "deterministic") src.splitting = Splitting::deterministic_two_channel;
    else if (split == "5050") src.splitting = Splitting::probabilistic_5050;
    else if (split == "demux") src.splitting = Splitting::wavelength_demux;
    else
        throw ConfigError(pf.name +
                          ": source.splitting must be \"deterministic\", \"5050\" or \"demux\"");

    std::size_t n_filters = b.table_array_count("source.demux_filter");
    for (std::size_t i = 0; i < n_filters; ++i)
        src.demux_filters.push_back(bind_spectral(b, "source.demux_filter." + std::to_string(i)));
    if (src.splitting == Splitting::wavelength_demux && src.demux_filters.empty())
        throw ConfigError(pf.name + ": demux splitting needs [[source.demux_filter]] entries");

    if (b.has("source.channel_transmissions")) {
        src.channel_transmissions = b.number_array("source.channel_transmissions");
        for (double t : src.channel_transmissions)
            if (!(t >= 0.0 && t <= 1.0))
                throw ConfigError(pf.name + ": channel transmissions must be in [0, 1]");
        if (src.channel_transmissions.size() != src.n_channels())
            throw ConfigError(pf.name + ": channel_transmissions needs one entry per channel");
    }

    // ---- detectors
    std::size_t n_det = b.table_array_count("detector");
    for (std::size_t i = 0; i < n_det; ++i) {
        std::string p = "detector." + std::to_string(i);
        DetectorConfig d;
        d.efficiency = b.number(p + ".efficiency", d.efficiency);
        d.dead_time_ps = b.integer(p + ".dead_time_ps", d.dead_time_ps);
        d.dark_rate_hz = b.number(p + ".dark_rate_hz", d.dark_rate_hz);
        d.afterpulse_prob = b.number(p + ".afterpulse_prob", d.afterpulse_prob);
        d.afterpulse_mean_ps = b.integer(p + ".afterpulse_mean_ps", d.afterpulse_mean_ps);
        d.afterpulse_window_ps = b.integer(p + ".afterpulse_window_ps", d.afterpulse_window_ps);
        d.jitter_sigma_ps = b.number(p + ".jitter_sigma_ps", d.jitter_sigma_ps);
        d.channel = static_cast<std::uint16_t>(i);
        std::int64_t ch = b.integer(p + ".source_channel", static_cast<std::int64_t>(i));
        if (ch < 0 || static_cast<std::size_t>(ch) >= src.n_channels())
            throw ConfigError(pf.name + ": " + p + ".source_channel out of range");
        cfg.detectors.push_back(d);
        cfg.det_source_channel.push_back(static_cast<std::uint16_t>(ch));
    }

    // ---- analysis
    AnalysisConfig &an = cfg.analysis;
    an.tau_sel_ps = b.integer("analysis.tau_sel_ps", an.tau_sel_ps);
    an.window_ps = b.integer("analysis.window_ps", an.window_ps);
    an.accidental_period_offset =
        static_cast<int>(b.integer("analysis.accidental_period_offset", 1));
    if (an.tau_sel_ps < 0 || an.window_ps <= 0)
        throw ConfigError(pf.name + ": analysis needs tau_sel_ps >= 0 and window_ps > 0");
    if (b.has("analysis.pair")) {
        auto pair = b.integer_array("analysis.pair");
        if (pair.size() != 2)
            throw ConfigError(pf.name + ": analysis.pair must be [detector_a, detector_b]");
        an.pair_a = static_cast<int>(pair[0]);
        an.pair_b = static_cast<int>(pair[1]);
    }
    if (b.has("analysis.g2_arms")) {
        auto arms = b.integer_array("analysis.g2_arms");
        if (arms.size() != 3)
            throw ConfigError(pf.name + ": analysis.g2_arms must be [arm1, arm2, herald]");
        an.has_g2 = true;
        an.g2_arm1 = static_cast<int>(arms[0]);
        an.g2_arm2 = static_cast<int>(arms[1]);
        an.g2_herald = static_cast<int>(arms[2]);
    }
    if (b.table_present("analysis.overlap")) {
        an.has_overlap = true;
        an.overlap_interval = bind_grid(b, "analysis.overlap");
        an.overlap_signal_channel =
            static_cast<int>(b.integer("analysis.overlap.signal_channel", 0));
        an.overlap_idler_channel =
            static_cast<int>(b.integer("analysis.overlap.idler_channel", 1));
    }
    for (int idx : {an.pair_a, an.pair_b})
        if (idx < 0 || (n_det > 0 && static_cast<std::size_t>(idx) >= n_det))
            throw ConfigError(pf.name + ": analysis.pair index out of range");

    // ---- pump
    if (b.table_present("pump")) {
        cfg.pump.present = true;
        cfg.pump.average_power_mw = b.number("pump.average_power_mw");
        cfg.pump.wavelength_nm = b.number("pump.wavelength_nm", cfg.pump.wavelength_nm);
        cfg.pump.bandwidth_nm = b.number("pump.bandwidth_nm", 0.0);
    }

    // ---- jsa
    if (b.table_present("jsa")) {
        JsaSettings &j = cfg.jsa;
        j.present = true;
        std::string pump = b.str("jsa.pump", "gaussian");
        if (pump == "gaussian") j.pump_kind = JsaSettings::PumpKind::gaussian;
        else if (pump == "spectrum_file") j.pump_kind = JsaSettings::PumpKind::spectrum_file;
        else if (pump == "temporal_file") j.pump_kind = JsaSettings::PumpKind::temporal_file;
        else
            throw ConfigError(pf.name + ": jsa.pump must be \"gaussian\", \"spectrum_file\" or "
                                        "\"temporal_file\"");
        j.pump_fwhm_ps = b.number("jsa.pump_fwhm_ps", j.pump_fwhm_ps);
        if (j.pump_kind != JsaSettings::PumpKind::gaussian)
            j.pump_file = b.resolve(b.str("jsa.pump_file")).string();
        std::string conv = b.str("jsa.pm_convention", "amplitude");
        if (conv == "amplitude") j.pm_convention = SincConvention::amplitude;
        else if (conv == "intensity") j.pm_convention = SincConvention::intensity;
        else throw ConfigError(pf.name + ": jsa.pm_convention must be \"amplitude\" or "
                                         "\"intensity\"");
        j.pm_first_zero_thz = b.number("jsa.pm_first_zero_thz", 0.0);
        j.pm_length_mm = b.number("jsa.pm_length_mm", 0.0);
        j.pm_dk_slope_rad_per_mm_thz = b.number("jsa.pm_dk_slope_rad_per_mm_thz", 0.0);
        j.pm_intensity_fwhm_thz = b.number("jsa.pm_intensity_fwhm_thz", 0.0);
        int n_pm = (j.pm_first_zero_thz > 0.0) + (j.pm_length_mm > 0.0) +
                   (j.pm_intensity_fwhm_thz > 0.0);
        if (n_pm != 1)
            throw ConfigError(pf.name +
                              ": jsa needs exactly one of pm_first_zero_thz, pm_length_mm (+ "
                              "pm_dk_slope_rad_per_mm_thz), pm_intensity_fwhm_thz");
        if (j.pm_length_mm > 0.0 && !(j.pm_dk_slope_rad_per_mm_thz > 0.0))
            throw ConfigError(pf.name + ": jsa.pm_length_mm needs pm_dk_slope_rad_per_mm_thz");
        j.signal = bind_grid(b, "jsa.signal");
        j.idler = bind_grid(b, "jsa.idler");
    }

    b.check_all_consumed();
    cfg.reseed(static_cast<std::uint64_t>(seed));
    return cfg;
}

} // namespace

double RunConfig::total_time_s() const {
    if (source.mode == EmissionMode::cw) return source.cw_duration_s;
    return static_cast<double>(source.n_pulses) / source.repetition_rate_hz;
}

std::int64_t RunConfig::total_time_ps() const {
    return std::llround(total_time_s() * 1e12);
}

void RunConfig::reseed(std::uint64_t master) {
    seed = master;
    source.rng_seed = derive_seed(master, kSeedSourceTag);
    for (std::size_t i = 0; i < detectors.size(); ++i)
        detectors[i].rng_seed = derive_seed(master, kSeedDetectorTag, i);
}

RunConfig parse_run_config(const std::string &text, const std::string &name) {
    return bind_config(parse_text(text, name), {}, text);
}

RunConfig load_run_config(const std::filesystem::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + file.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read config file '" + file.string() + "'");
    return bind_config(parse_text(ss.str(), file.filename().string()), file.parent_path(), ss.str());
}

} // namespace pairforge
