#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "pairforge/source.hpp"
#include "pairforge/tagproc.hpp"

namespace pairforge {

// Single-photon detector: binomial efficiency, non-extendable dead time,
// dark counts as an independent Poisson process merged before the dead-time
// logic, afterpulses with per-click probability and truncated-exponential
// delay measured from the end of the dead time (afterpulses can chain).
struct DetectorConfig {
    double efficiency = 1.0;             // photon click probability
    std::int64_t dead_time_ps = 5'000'000;  // 5 us, non-extendable
    double dark_rate_hz = 0.0;
    double afterpulse_prob = 0.0;        // per click, chains allowed
    std::int64_t afterpulse_mean_ps = 10'000'000;   // 10 us
    std::int64_t afterpulse_window_ps = 40'000'000; // 40 us cap on the delay
    double jitter_sigma_ps = 0.0;        // gaussian timing jitter on emitted tags
    std::uint16_t channel = 0;           // channel id stamped on the tags
    std::uint64_t rng_seed = 1;
};

// Turns photon arrivals into time tags over [0, t_end_ps). Arrivals must be
// time sorted. Output is sorted (jitter can reorder tags, they are re-sorted
// before returning) and strictly the clicks of a single detector, so
// successive unjittered click times differ by >= dead_time_ps.
std::vector<TimeTag> detect(std::span<const PhotonArrival> arrivals,
                            const DetectorConfig &cfg, std::int64_t t_end_ps);

} // namespace pairforge
