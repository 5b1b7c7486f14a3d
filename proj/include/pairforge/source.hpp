#pragma once
#include <cstdint>
#include <vector>

#include "pairforge/spectral.hpp"

namespace pairforge {

// Execution policy for the data-parallel kernels. Serial is the reference
// implementation; OpenMP must produce bit-identical output (verified in the
// tests, compared in bench_kernels).
enum class Exec { serial, openmp };

enum class EmissionMode { pulsed, cw };

enum class Splitting {
    deterministic_two_channel, // signal -> ch0, idler -> ch1 (gamma = 1)
    probabilistic_5050,        // each photon -> ch0/ch1 with p = 1/2 (gamma = 1/2)
    wavelength_demux           // categorical on per-channel filter transmission
};

struct SourceConfig {
    EmissionMode mode = EmissionMode::pulsed;

    // pulsed
    double repetition_rate_hz = 33.0e6;
    double pulse_duration_ps = 1.0; // emission time uniform within the pulse
    double mu = 0.0;                // mean pairs per pulse
    std::uint64_t n_pulses = 0;

    // cw, mapped onto the pulsed engine with one bin per "pulse"
    double cw_pair_rate_hz = 0.0;
    double cw_bin_ps = 1000.0; // <= 1 ns keeps within-bin uniformization exact enough
    double cw_duration_s = 0.0;

    double nu0_thz = 193.55; // degeneracy center; signal = nu0+f, idler = nu0-f
    SpectralFunction joint_density; // density of the pair offset f (difference axis)

    Splitting splitting = Splitting::deterministic_two_channel;
    std::vector<SpectralFunction> demux_filters;   // channel c transmission, absolute THz
    std::vector<double> channel_transmissions;     // per-channel survival, default 1

    std::uint64_t rng_seed = 1;

    double pulse_period_ps() const { return 1.0e12 / repetition_rate_hz; }
    std::size_t n_channels() const {
        return splitting == Splitting::wavelength_demux ? demux_filters.size() : 2;
    }
    // gamma of the mu_generated estimator for this splitting
    double gamma() const { return splitting == Splitting::probabilistic_5050 ? 0.5 : 1.0; }
};

struct PairEmission {
    std::int64_t time_ps = 0;
    double signal_thz = 0.0;
    double idler_thz = 0.0;
    std::uint64_t pulse_index = 0;

    friend bool operator==(const PairEmission &, const PairEmission &) = default;
};

// Poisson(mu) pairs per pulse, offsets f drawn from joint_density (piecewise
// linear inverse CDF), ordered by pulse index. Block-seeded: the stream for a
// given config+seed is byte-identical no matter the execution policy or
// thread count.
std::vector<PairEmission> simulate_emissions(const SourceConfig &cfg,
                                             Exec exec = Exec::openmp);

struct PhotonArrival {
    std::int64_t time_ps = 0;
    double freq_thz = 0.0;
};

// Routes both photons of each pair into source output channels according to
// cfg.splitting, then applies channel_transmissions. Uses its own substream
// of the master seed; deterministic given (emissions, cfg, seed).
std::vector<std::vector<PhotonArrival>> route_photons(std::span<const PairEmission> emissions,
                                                      const SourceConfig &cfg);

// Wavelength-demux sanity check: filters come in frequency-conjugate pairs
// (2j, 2j+1) about nu0. Throws std::invalid_argument when violated.
void validate_demux_filters(const SourceConfig &cfg, double tolerance = 1e-6);

} // namespace pairforge
