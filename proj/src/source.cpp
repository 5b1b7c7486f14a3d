#include "pairforge/source.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "pairforge/rng.hpp"

namespace pairforge {

namespace {

constexpr std::uint64_t kBlockPulses = 1 << 16; // pulses per seed block
constexpr std::uint64_t kSourceTag = 0x536f7572ULL;  // substream tags
constexpr std::uint64_t kRouteTag = 0x526f7574ULL;

// Inverse-CDF sampler for a piecewise-linear density on a uniform grid. The
// CDF is quadratic within each cell; inverted with the stable quadratic root.
class DensitySampler {
  public:
    explicit DensitySampler(const SpectralFunction &density) : grid_(density.grid()) {
        const auto &v = density.values();
        cdf_.resize(v.size());
        cdf_[0] = 0.0;
        double h = grid_.step();
        for (std::size_t i = 1; i < v.size(); ++i)
            cdf_[i] = cdf_[i - 1] + 0.5 * (v[i - 1] + v[i]) * h;
        double total = cdf_.back();
        if (!(total > 0.0))
            throw std::invalid_argument("joint density integrates to zero");
        for (double &c : cdf_) c /= total;
        vals_ = v;
        for (double &x : vals_) x /= total;
    }

    double sample(Rng &rng) const {
        double u = rng.uniform();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        std::size_t i = it == cdf_.begin()
                            ? 0
                            : static_cast<std::size_t>(it - cdf_.begin()) - 1;
        if (i >= cdf_.size() - 1) i = cdf_.size() - 2;
        double h = grid_.step();
        double du = u - cdf_[i];
        double a = vals_[i], b = vals_[i + 1];
        double slope = (b - a) / h;
        double x; // offset within the cell
        if (std::abs(slope) * h < 1e-12 * (a + b + 1e-300)) {
            x = a > 0 ? du / a : 0.0;
        } else {
            // solve a*x + slope*x^2/2 = du for x in [0,h]
            double disc = a * a + 2.0 * slope * du;
            x = disc > 0 ? (std::sqrt(disc) - a) / slope : 0.0;
        }
        x = std::clamp(x, 0.0, h);
        return grid_.point(i) + x;
    }

  private:
    FrequencyGrid grid_;
    std::vector<double> cdf_;
    std::vector<double> vals_;
};

struct PulsedParams {
    double mu = 0.0;
    double period_ps = 0.0;
    double duration_ps = 0.0;
    std::uint64_t n_pulses = 0;
};

PulsedParams pulsed_params(const SourceConfig &cfg) {
    PulsedParams p;
    if (cfg.mode == EmissionMode::pulsed) {
        if (!(cfg.repetition_rate_hz > 0.0))
            throw std::invalid_argument("repetition rate must be > 0");
        if (cfg.mu < 0.0) throw std::invalid_argument("mu must be >= 0");
        p.mu = cfg.mu;
        p.period_ps = cfg.pulse_period_ps();
        p.duration_ps = std::min(cfg.pulse_duration_ps, p.period_ps);
        p.n_pulses = cfg.n_pulses;
    } else {
        // cw as Poisson arrivals uniformized over fixed bins
        if (!(cfg.cw_bin_ps > 0.0))
            throw std::invalid_argument("cw bin must be > 0 ps");
        if (cfg.cw_pair_rate_hz < 0.0) throw std::invalid_argument("cw rate must be >= 0");
        p.period_ps = cfg.cw_bin_ps;
        p.duration_ps = cfg.cw_bin_ps;
        p.mu = cfg.cw_pair_rate_hz * cfg.cw_bin_ps * 1e-12;
        p.n_pulses = static_cast<std::uint64_t>(cfg.cw_duration_s * 1e12 / cfg.cw_bin_ps);
    }
    return p;
}

// One seed block: pulses [begin, end). Geometric skip over empty pulses
// (P(empty) = e^-mu), then the >=1-conditioned pair count; distributionally
// identical to a Poisson(mu) draw per pulse but O(occupied pulses).
void run_block(const PulsedParams &p, const DensitySampler &sampler, double nu0,
               std::uint64_t seed, std::uint64_t begin, std::uint64_t end,
               std::vector<PairEmission> &out) {
    if (p.mu <= 0.0) return;
    Rng rng(seed);
    double log_p_empty = -p.mu;
    std::uint64_t pulse = begin;
    while (pulse < end) {
        std::uint64_t gap = rng.geometric_gap(log_p_empty);
        if (gap >= end - pulse) break;
        pulse += gap;
        std::uint64_t k = rng.poisson_ge1(p.mu);
        double base = static_cast<double>(pulse) * p.period_ps;
        for (std::uint64_t j = 0; j < k; ++j) {
            double f = sampler.sample(rng);
            double t = base + rng.uniform() * p.duration_ps;
            out.push_back({static_cast<std::int64_t>(std::llround(t)), nu0 + f, nu0 - f,
                           pulse});
        }
        ++pulse;
    }
    // pairs within one pulse can come out of time order; emission streams are
    // sorted by time
    std::sort(out.begin(), out.end(),
              [](const PairEmission &a, const PairEmission &b) { return a.time_ps < b.time_ps; });
}

} // namespace

std::vector<PairEmission> simulate_emissions(const SourceConfig &cfg, Exec exec) {
    PulsedParams p = pulsed_params(cfg);
    if (cfg.joint_density.values().empty())
        throw std::invalid_argument("source needs a joint spectral density");
    DensitySampler sampler(cfg.joint_density);

    std::uint64_t n_blocks = (p.n_pulses + kBlockPulses - 1) / kBlockPulses;
    std::vector<std::vector<PairEmission>> blocks(n_blocks);

    auto do_block = [&](std::uint64_t b) {
        std::uint64_t begin = b * kBlockPulses;
        std::uint64_t end = std::min(begin + kBlockPulses, p.n_pulses);
        run_block(p, sampler, cfg.nu0_thz, derive_seed(cfg.rng_seed, kSourceTag, b), begin,
                  end, blocks[b]);
    };

    if (exec == Exec::openmp) {
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b)
            do_block(static_cast<std::uint64_t>(b));
    } else {
        for (std::uint64_t b = 0; b < n_blocks; ++b) do_block(b);
    }

    std::size_t total = 0;
    for (const auto &blk : blocks) total += blk.size();
    std::vector<PairEmission> out;
    out.reserve(total);
    for (auto &blk : blocks) out.insert(out.end(), blk.begin(), blk.end());
    return out;
}

std::vector<std::vector<PhotonArrival>> route_photons(std::span<const PairEmission> emissions,
                                                      const SourceConfig &cfg) {
    std::size_t n_ch = cfg.n_channels();
    if (n_ch < 1) throw std::invalid_argument("routing needs at least one output channel");
    if (!cfg.channel_transmissions.empty() && cfg.channel_transmissions.size() != n_ch)
        throw std::invalid_argument("channel_transmissions size mismatch");

    std::vector<std::vector<PhotonArrival>> out(n_ch);
    Rng rng(derive_seed(cfg.rng_seed, kRouteTag));

    auto transmit = [&](std::size_t ch) {
        if (cfg.channel_transmissions.empty()) return true;
        double t = cfg.channel_transmissions[ch];
        return t >= 1.0 || rng.bernoulli(t);
    };
    auto deliver = [&](std::size_t ch, std::int64_t t, double f) {
        if (transmit(ch)) out[ch].push_back({t, f});
    };

    switch (cfg.splitting) {
    case Splitting::deterministic_two_channel:
        for (const PairEmission &e : emissions) {
            deliver(0, e.time_ps, e.signal_thz);
            deliver(1, e.time_ps, e.idler_thz);
        }
        break;
    case Splitting::probabilistic_5050:
        for (const PairEmission &e : emissions) {
            deliver(rng.bernoulli(0.5) ? 1 : 0, e.time_ps, e.signal_thz);
            deliver(rng.bernoulli(0.5) ? 1 : 0, e.time_ps, e.idler_thz);
        }
        break;
    case Splitting::wavelength_demux: {
        if (cfg.demux_filters.empty())
            throw std::invalid_argument("wavelength_demux needs channel filters");
        auto route_one = [&](std::int64_t t, double f) {
            double u = rng.uniform();
            double cum = 0.0;
            for (std::size_t c = 0; c < n_ch; ++c) {
                const SpectralFunction &filt = cfg.demux_filters[c];
                double pc = filt.covers(f) ? filt.at(f) : 0.0;
                cum += pc;
                if (u < cum) { // photon lost when u lands beyond sum(p_c)
                    deliver(c, t, f);
                    return;
                }
            }
        };
        for (const PairEmission &e : emissions) {
            route_one(e.time_ps, e.signal_thz);
            route_one(e.time_ps, e.idler_thz);
        }
        break;
    }
    }
    return out;
}

void validate_demux_filters(const SourceConfig &cfg, double tolerance) {
    const auto &filters = cfg.demux_filters;
    if (filters.size() % 2 != 0)
        throw std::invalid_argument("demux filters must come in conjugate pairs");
    for (std::size_t j = 0; j + 1 < filters.size(); j += 2) {
        const auto &s = filters[j];
        const auto &i = filters[j + 1];
        // mirrored grids about nu0
        double s_off = s.grid().center_thz - cfg.nu0_thz;
        double i_off = cfg.nu0_thz - i.grid().center_thz;
        if (std::abs(s_off - i_off) > tolerance ||
            std::abs(s.grid().span_thz - i.grid().span_thz) > tolerance)
            throw std::invalid_argument("demux channel pair " + std::to_string(j / 2) +
                                        " is not frequency-conjugate about nu0");
        std::size_t n = std::min(s.grid().n_points, i.grid().n_points);
        for (std::size_t k = 0; k < n; ++k) {
            double fs = s.grid().point(k);
            double p_s = s.values()[k];
            double p_i = i.at(2.0 * cfg.nu0_thz - fs);
            if (std::abs(p_s - p_i) > tolerance + 1e-9 * std::max(p_s, p_i))
                throw std::invalid_argument("demux channel pair " + std::to_string(j / 2) +
                                            " transmission is not mirror-symmetric");
        }
    }
}

} // namespace pairforge
