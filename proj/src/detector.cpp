#include "pairforge/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "pairforge/rng.hpp"

namespace pairforge {

namespace {
constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();
}

// Candidate clicks (thinned photons, dark counts, afterpulses) are merged in
// time order and gated by a non-extendable dead time: a candidate fires iff
// the detector is live, and a fired click re-arms the dead time. Blocked
// candidates do not extend it.
std::vector<TimeTag> detect(std::span<const PhotonArrival> arrivals, const DetectorConfig &cfg,
                            std::int64_t t_end_ps) {
    if (!(cfg.efficiency >= 0.0 && cfg.efficiency <= 1.0))
        throw std::invalid_argument("detector efficiency must be in [0, 1]");
    if (cfg.dead_time_ps < 0) throw std::invalid_argument("dead time must be >= 0");
    if (cfg.dark_rate_hz < 0.0) throw std::invalid_argument("dark rate must be >= 0");
    if (!(cfg.afterpulse_prob >= 0.0 && cfg.afterpulse_prob < 1.0))
        throw std::invalid_argument("afterpulse probability must be in [0, 1)");
    for (std::size_t i = 1; i < arrivals.size(); ++i)
        if (arrivals[i].time_ps < arrivals[i - 1].time_ps)
            throw std::invalid_argument("photon arrivals must be time-sorted");

    Rng rng(cfg.rng_seed);
    std::vector<TimeTag> out;

    double dark_mean_ps = cfg.dark_rate_hz > 0.0 ? 1e12 / cfg.dark_rate_hz : 0.0;
    std::int64_t next_dark = kNever;
    if (cfg.dark_rate_hz > 0.0) next_dark = std::llround(rng.exponential(dark_mean_ps));

    std::priority_queue<std::int64_t, std::vector<std::int64_t>, std::greater<>> afterpulses;
    std::size_t idx = 0;
    std::int64_t ready_at = 0;

    auto candidate = [&](std::int64_t t) {
        if (t < ready_at) return; // dead
        out.push_back({t, cfg.channel});
        ready_at = t + cfg.dead_time_ps;
        if (cfg.afterpulse_prob > 0.0 && rng.bernoulli(cfg.afterpulse_prob)) {
            double delay =
                rng.truncated_exponential(cfg.afterpulse_mean_ps,
                                          static_cast<double>(cfg.afterpulse_window_ps));
            afterpulses.push(ready_at + std::llround(delay));
        }
    };

    while (true) {
        std::int64_t t_arr = idx < arrivals.size() ? arrivals[idx].time_ps : kNever;
        std::int64_t t_ap = afterpulses.empty() ? kNever : afterpulses.top();
        std::int64_t t = std::min({t_arr, next_dark, t_ap});
        if (t == kNever || t >= t_end_ps) break; // observation window is [0, t_end)
        if (t == t_arr) {
            ++idx;
            if (cfg.efficiency >= 1.0 || rng.bernoulli(cfg.efficiency)) candidate(t);
        } else if (t == next_dark) {
            candidate(t);
            next_dark += std::llround(rng.exponential(dark_mean_ps));
        } else {
            afterpulses.pop();
            candidate(t);
        }
    }

    if (cfg.jitter_sigma_ps > 0.0) {
        for (TimeTag &tag : out) {
            std::int64_t jittered =
                tag.time_ps + std::llround(rng.normal(0.0, cfg.jitter_sigma_ps));
            tag.time_ps = std::max<std::int64_t>(jittered, 0);
        }
        std::stable_sort(out.begin(), out.end(), [](const TimeTag &a, const TimeTag &b) {
            return a.time_ps < b.time_ps;
        });
    }
    return out;
}

} // namespace pairforge
