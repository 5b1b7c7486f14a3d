#pragma once
#include <cmath>
#include <cstdint>
#include <random>

namespace pairforge {

// Seed mixer used to derive independent substream seeds (per source block,
// per detector, per routing stage) from one master seed. Standard splitmix64.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_tag,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ stream_tag) + index);
}

// mt19937_64 with the variate transforms pinned here instead of <random>
// distributions: libstdc++'s distribution algorithms are implementation
// defined, and tag streams must be reproducible byte-for-byte for a given
// config+seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t bits() { return eng_(); }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // uniform in (0,1], safe as a log() argument
    double uniform_pos() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double mean) { return -mean * std::log(uniform_pos()); }

    // Box-Muller, no spare caching (keeps the draw sequence trivially
    // predictable for the reproducibility tests)
    double normal(double mean, double sigma) {
        double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        double t = 6.283185307179586476925286766559 * uniform();
        return mean + sigma * r * std::cos(t);
    }

    // exponential with the given mean, truncated to [0, window)
    double truncated_exponential(double mean, double window) {
        double cap = 1.0 - std::exp(-window / mean);
        return -mean * std::log(1.0 - uniform() * cap);
    }

    // Knuth product method, exact; chunked via Poisson additivity so exp(-mu)
    // never underflows
    std::uint64_t poisson(double mu) {
        std::uint64_t k = 0;
        while (mu > 30.0) {
            k += poisson_small(30.0);
            mu -= 30.0;
        }
        return k + poisson_small(mu);
    }

    // Poisson conditioned on >= 1, inverse CDF walk. Companion of the
    // geometric empty-pulse skip in the emission kernel.
    std::uint64_t poisson_ge1(double mu) {
        double u = uniform();
        double norm = -std::expm1(-mu); // 1 - e^-mu = P(k >= 1)
        double term = mu * std::exp(-mu); // P(k = 1)
        double cum = term;
        std::uint64_t k = 1;
        while (u * norm > cum && k < 4096) {
            ++k;
            term *= mu / static_cast<double>(k);
            cum += term;
        }
        return k;
    }

    // count of consecutive failures before the next success for success
    // probability 1 - p_fail, i.e. floor(log U / log p_fail)
    std::uint64_t geometric_gap(double log_p_fail) {
        double u = uniform_pos();
        if (u >= 1.0) return 0;
        double g = std::log(u) / log_p_fail;
        if (g >= 1.8e19) return UINT64_MAX; // p_fail ~ 1, effectively never
        return static_cast<std::uint64_t>(g);
    }

  private:
    std::uint64_t poisson_small(double mu) {
        if (mu <= 0.0) return 0;
        double limit = std::exp(-mu);
        double p = 1.0;
        std::uint64_t n = 0;
        do {
            ++n;
            p *= uniform();
        } while (p > limit);
        return n - 1;
    }

    std::mt19937_64 eng_;
};

} // namespace pairforge
