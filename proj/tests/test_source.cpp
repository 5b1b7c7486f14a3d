#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pairforge/source.hpp"

using namespace pairforge;

namespace {

SpectralFunction flat_density(double center, double span, std::size_t n = 65) {
    return SpectralFunction::flat(FrequencyGrid{center, span, n}, 1.0);
}

SourceConfig base_config() {
    SourceConfig cfg;
    cfg.mode = EmissionMode::pulsed;
    cfg.repetition_rate_hz = 33.0e6;
    cfg.pulse_duration_ps = 66.0;
    cfg.mu = 0.01;
    cfg.n_pulses = 200000;
    cfg.nu0_thz = 193.55;
    cfg.joint_density = flat_density(0.2, 0.13);
    cfg.rng_seed = 42;
    return cfg;
}

// Kolmogorov-Smirnov statistic of samples against a CDF; returns D*sqrt(n).
template <typename Cdf>
double ks_stat(std::vector<double> samples, Cdf cdf) {
    std::sort(samples.begin(), samples.end());
    double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    }
    return d * std::sqrt(n);
}

} // namespace

TEST_CASE("zero mean emits nothing") {
    auto cfg = base_config();
    cfg.mu = 0.0;
    CHECK(simulate_emissions(cfg).empty());
    cfg.mu = 0.01;
    cfg.n_pulses = 0;
    CHECK(simulate_emissions(cfg).empty());
}

TEST_CASE("total pair count is Poisson in mu times pulses") {
    auto cfg = base_config(); // expectation 2000
    auto em = simulate_emissions(cfg);
    double expect = cfg.mu * static_cast<double>(cfg.n_pulses);
    CHECK(std::abs(static_cast<double>(em.size()) - expect) < 5.0 * std::sqrt(expect));

    // occupied pulses ~ Binomial(n, 1 - e^-mu): multi-pair pulses exist but
    // are rare at this mu
    std::uint64_t occupied = 1;
    for (std::size_t i = 1; i < em.size(); ++i)
        if (em[i].pulse_index != em[i - 1].pulse_index) ++occupied;
    double p = -std::expm1(-cfg.mu);
    double ex = p * static_cast<double>(cfg.n_pulses);
    CHECK(std::abs(static_cast<double>(occupied) - ex) < 5.0 * std::sqrt(ex));
    CHECK(occupied < em.size()); // at least one doublet at these statistics
}

TEST_CASE("emissions are time-sorted and stay inside their pulse") {
    auto cfg = base_config();
    auto em = simulate_emissions(cfg);
    REQUIRE(!em.empty());
    const double period = cfg.pulse_period_ps();
    for (std::size_t i = 0; i < em.size(); ++i) {
        if (i > 0) REQUIRE(em[i].time_ps >= em[i - 1].time_ps);
        REQUIRE(em[i].pulse_index < cfg.n_pulses);
        double start = static_cast<double>(em[i].pulse_index) * period;
        double dt = static_cast<double>(em[i].time_ps) - start;
        REQUIRE(dt >= -0.5);
        REQUIRE(dt <= cfg.pulse_duration_ps + 0.5);
    }
}

TEST_CASE("signal and idler frequencies mirror about the degeneracy point") {
    auto cfg = base_config();
    auto em = simulate_emissions(cfg);
    const auto &grid = cfg.joint_density.grid();
    for (const auto &e : em) {
        REQUIRE(e.signal_thz + e.idler_thz ==
                doctest::Approx(2.0 * cfg.nu0_thz).epsilon(1e-14));
        double f = e.signal_thz - cfg.nu0_thz;
        REQUIRE(f >= grid.lo() - 1e-12);
        REQUIRE(f <= grid.hi() + 1e-12);
    }
}

TEST_CASE("pair offsets follow the configured joint density") {
    auto cfg = base_config();
    cfg.mu = 0.05;
    cfg.n_pulses = 400000; // ~20k pairs

    SUBCASE("flat density: uniform offsets") {
        auto em = simulate_emissions(cfg);
        std::vector<double> f;
        f.reserve(em.size());
        for (const auto &e : em) f.push_back(e.signal_thz - cfg.nu0_thz);
        double lo = cfg.joint_density.grid().lo(), hi = cfg.joint_density.grid().hi();
        double ks = ks_stat(std::move(f), [&](double x) { return (x - lo) / (hi - lo); });
        CHECK(ks < 1.95); // alpha ~ 0.001
    }

    SUBCASE("triangular density via a table") {
        FrequencyGrid g{0.2, 0.13, 131};
        cfg.joint_density =
            SpectralFunction::tabulate(g, [&](double x) { return x - g.lo(); });
        auto em = simulate_emissions(cfg);
        std::vector<double> f;
        f.reserve(em.size());
        for (const auto &e : em) f.push_back(e.signal_thz - cfg.nu0_thz);
        double w = g.hi() - g.lo();
        double ks = ks_stat(std::move(f), [&](double x) {
            double u = (x - g.lo()) / w;
            return u * u; // CDF of the triangular ramp
        });
        CHECK(ks < 1.95);
    }
}

TEST_CASE("parallel and serial emission kernels are bit-identical") {
    auto cfg = base_config();
    cfg.mu = 0.02;
    cfg.n_pulses = 300000; // spans several seed blocks
    auto serial = simulate_emissions(cfg, Exec::serial);
    auto openmp = simulate_emissions(cfg, Exec::openmp);
    REQUIRE(serial.size() == openmp.size());
    REQUIRE(serial == openmp);
}

TEST_CASE("emission stream is reproducible per seed and changes across seeds") {
    auto cfg = base_config();
    auto a = simulate_emissions(cfg);
    auto b = simulate_emissions(cfg);
    CHECK(a == b);
    cfg.rng_seed = 43;
    auto c = simulate_emissions(cfg);
    CHECK(a != c);
}

TEST_CASE("cw emission maps to the pulsed engine") {
    SourceConfig cfg;
    cfg.mode = EmissionMode::cw;
    cfg.cw_pair_rate_hz = 1.0e6;
    cfg.cw_bin_ps = 1000.0;
    cfg.cw_duration_s = 0.05; // expect 50k pairs
    cfg.nu0_thz = 193.55;
    cfg.joint_density = flat_density(0.2, 0.13);
    cfg.rng_seed = 9;
    auto em = simulate_emissions(cfg);

    double expect = cfg.cw_pair_rate_hz * cfg.cw_duration_s;
    CHECK(std::abs(static_cast<double>(em.size()) - expect) < 5.0 * std::sqrt(expect));

    // inter-arrival gaps of a homogeneous Poisson process are exponential
    std::vector<double> gaps;
    gaps.reserve(em.size());
    for (std::size_t i = 1; i < em.size(); ++i)
        gaps.push_back(static_cast<double>(em[i].time_ps - em[i - 1].time_ps));
    double mean_ps = 1e12 / cfg.cw_pair_rate_hz;
    double ks = ks_stat(std::move(gaps),
                        [&](double x) { return -std::expm1(-x / mean_ps); });
    CHECK(ks < 1.95);

    // all inside the run window
    CHECK(em.front().time_ps >= 0);
    CHECK(em.back().time_ps < static_cast<std::int64_t>(cfg.cw_duration_s * 1e12));
}

TEST_CASE("deterministic splitting sends signal to channel 0, idler to channel 1") {
    auto cfg = base_config();
    auto em = simulate_emissions(cfg);
    auto routed = route_photons(em, cfg);
    REQUIRE(routed.size() == 2);
    CHECK(routed[0].size() == em.size());
    CHECK(routed[1].size() == em.size());
    for (std::size_t i = 0; i < em.size(); ++i) {
        CHECK(routed[0][i].freq_thz == em[i].signal_thz);
        CHECK(routed[1][i].freq_thz == em[i].idler_thz);
        CHECK(routed[0][i].time_ps == em[i].time_ps);
    }
    CHECK(cfg.gamma() == 1.0);
}

TEST_CASE("50/50 splitting scatters photons binomially") {
    auto cfg = base_config();
    cfg.splitting = Splitting::probabilistic_5050;
    cfg.mu = 0.05;
    cfg.n_pulses = 400000;
    auto em = simulate_emissions(cfg);
    auto routed = route_photons(em, cfg);
    REQUIRE(routed.size() == 2);
    double total = static_cast<double>(2 * em.size());
    CHECK(routed[0].size() + routed[1].size() == 2 * em.size());
    double half = 0.5 * total;
    CHECK(std::abs(static_cast<double>(routed[0].size()) - half) <
          5.0 * std::sqrt(total * 0.25));
    CHECK(cfg.gamma() == 0.5);

    // each channel stays time-sorted after routing
    for (const auto &ch : routed)
        for (std::size_t i = 1; i < ch.size(); ++i)
            REQUIRE(ch[i].time_ps >= ch[i - 1].time_ps);
}

TEST_CASE("wavelength demux routes by filter transmission and drops the rest") {
    auto cfg = base_config();
    cfg.splitting = Splitting::wavelength_demux;
    cfg.mu = 0.05;
    cfg.n_pulses = 200000;
    // conjugate 8th-order supergaussian channel filters
    auto sg = [](double center, double fwhm) {
        return SpectralFunction::tabulate(FrequencyGrid{center, 0.26, 261}, [=](double v) {
            double u = 2.0 * (v - center) / fwhm;
            double u2 = u * u, u4 = u2 * u2;
            return std::exp(-0.6931471805599453 * u4 * u4);
        });
    };
    cfg.demux_filters = {sg(193.75, 0.081), sg(193.35, 0.081)};
    validate_demux_filters(cfg); // conjugate pair: must not throw

    auto em = simulate_emissions(cfg);
    auto routed = route_photons(em, cfg);
    REQUIRE(routed.size() == 2);

    // expected acceptance per photon is the interval-averaged transmission
    FrequencyGrid interval{0.2, 0.13, 2001};
    double eta = eta_single(cfg.demux_filters[0], interval, SpectralRole::signal,
                            cfg.nu0_thz);
    double n = static_cast<double>(em.size());
    CHECK(std::abs(static_cast<double>(routed[0].size()) - eta * n) <
          5.0 * std::sqrt(n * eta * (1 - eta)));
    CHECK(std::abs(static_cast<double>(routed[1].size()) - eta * n) <
          5.0 * std::sqrt(n * eta * (1 - eta)));

    // routed photons carry frequencies the filter actually covers
    for (const auto &ph : routed[0]) REQUIRE(cfg.demux_filters[0].covers(ph.freq_thz));
    for (const auto &ph : routed[1]) REQUIRE(cfg.demux_filters[1].covers(ph.freq_thz));

    SUBCASE("asymmetric filters are rejected") {
        cfg.demux_filters[1] = sg(193.30, 0.081); // not the conjugate center
        CHECK_THROWS_AS(validate_demux_filters(cfg), std::invalid_argument);
    }
    SUBCASE("odd filter count is rejected") {
        cfg.demux_filters.push_back(sg(193.95, 0.081));
        CHECK_THROWS_AS(validate_demux_filters(cfg), std::invalid_argument);
    }
}

TEST_CASE("channel transmissions thin the routed streams") {
    auto cfg = base_config();
    cfg.mu = 0.05;
    cfg.n_pulses = 200000;
    cfg.channel_transmissions = {0.5, 1.0};
    auto em = simulate_emissions(cfg);
    auto routed = route_photons(em, cfg);
    double n = static_cast<double>(em.size());
    CHECK(std::abs(static_cast<double>(routed[0].size()) - 0.5 * n) <
          5.0 * std::sqrt(n * 0.25));
    CHECK(routed[1].size() == em.size());

    cfg.channel_transmissions = {0.5};
    CHECK_THROWS_AS((void)route_photons(em, cfg), std::invalid_argument);
}

TEST_CASE("routing is deterministic per seed") {
    auto cfg = base_config();
    cfg.splitting = Splitting::probabilistic_5050;
    auto em = simulate_emissions(cfg);
    auto r1 = route_photons(em, cfg);
    auto r2 = route_photons(em, cfg);
    REQUIRE(r1.size() == r2.size());
    for (std::size_t c = 0; c < r1.size(); ++c) {
        REQUIRE(r1[c].size() == r2[c].size());
        for (std::size_t i = 0; i < r1[c].size(); ++i) {
            CHECK(r1[c][i].time_ps == r2[c][i].time_ps);
            CHECK(r1[c][i].freq_thz == r2[c][i].freq_thz);
        }
    }
}

TEST_CASE("source configuration validation") {
    auto cfg = base_config();
    cfg.mu = -0.1;
    CHECK_THROWS_AS((void)simulate_emissions(cfg), std::invalid_argument);
    cfg = base_config();
    cfg.repetition_rate_hz = 0.0;
    CHECK_THROWS_AS((void)simulate_emissions(cfg), std::invalid_argument);
    cfg = base_config();
    cfg.joint_density = SpectralFunction();
    CHECK_THROWS_AS((void)simulate_emissions(cfg), std::invalid_argument);
    cfg = base_config();
    cfg.joint_density = SpectralFunction(FrequencyGrid{0.2, 0.13, 5}, {0, 0, 0, 0, 0});
    CHECK_THROWS_AS((void)simulate_emissions(cfg), std::invalid_argument);
    cfg = base_config();
    cfg.splitting = Splitting::wavelength_demux; // no filters given
    auto em = simulate_emissions(cfg);
    CHECK_THROWS_AS((void)route_photons(em, cfg), std::invalid_argument);
}
