// Serial reference vs OpenMP kernels, plus tag-scan throughput.
#include <benchmark/benchmark.h>

#include <vector>

#include "pairforge/jsa.hpp"
#include "pairforge/pipeline.hpp"
#include "pairforge/rng.hpp"
#include "pairforge/source.hpp"
#include "pairforge/tagproc.hpp"

namespace {

using namespace pairforge;

SourceConfig bench_source() {
    SourceConfig cfg;
    cfg.mu = 0.02;
    cfg.n_pulses = 2'000'000;
    cfg.joint_density = SpectralFunction::flat({0.2, 0.13, 65}, 1.0);
    cfg.rng_seed = 42;
    return cfg;
}

void emissions(benchmark::State &state, Exec exec) {
    SourceConfig cfg = bench_source();
    std::size_t n = 0;
    for (auto _ : state) {
        auto out = simulate_emissions(cfg, exec);
        n = out.size();
        benchmark::DoNotOptimize(out.data());
    }
    state.counters["pairs"] = static_cast<double>(n);
    state.counters["pulses/s"] = benchmark::Counter(
        static_cast<double>(cfg.n_pulses), benchmark::Counter::kIsIterationInvariantRate);
}
void BM_emissions_serial(benchmark::State &s) { emissions(s, Exec::serial); }
void BM_emissions_openmp(benchmark::State &s) { emissions(s, Exec::openmp); }

void jsa_fill(benchmark::State &state, Exec exec) {
    Profile pump = gaussian_pump_from_duration(400.0);
    Profile pm = sinc_phase_matching(0.3383);
    FrequencyGrid signal{193.75, 0.8, 1024}, idler{193.35, 0.8, 1024};
    for (auto _ : state) {
        JsaMatrix jsa = build_jsa(pump, pm, 193.55, signal, idler, exec);
        benchmark::DoNotOptimize(jsa.a.data());
    }
    state.counters["cells/s"] = benchmark::Counter(
        static_cast<double>(signal.n_points * idler.n_points),
        benchmark::Counter::kIsIterationInvariantRate);
}
void BM_jsa_serial(benchmark::State &s) { jsa_fill(s, Exec::serial); }
void BM_jsa_openmp(benchmark::State &s) { jsa_fill(s, Exec::openmp); }

std::vector<TimeTag> synthetic_tags(std::uint64_t seed, std::size_t n, double rate_hz) {
    Rng rng(seed);
    std::vector<TimeTag> tags;
    tags.reserve(n);
    double t = 0.0, mean_ps = 1e12 / rate_hz;
    for (std::size_t i = 0; i < n; ++i) {
        t += rng.exponential(mean_ps);
        tags.push_back({static_cast<std::int64_t>(t), 0});
    }
    return tags;
}

void BM_pair_scan(benchmark::State &state) {
    auto a = synthetic_tags(1, 1'000'000, 100e3);
    auto b = synthetic_tags(2, 1'000'000, 100e3);
    std::uint64_t cc = 0;
    for (auto _ : state) {
        MemTagSource sa(a), sb(b);
        PairScanResult res = scan_pair(sa, sb, 40'000'000, 500, 0);
        cc = res.coincidences;
        benchmark::DoNotOptimize(res);
    }
    state.counters["coincidences"] = static_cast<double>(cc);
    state.counters["tags/s"] = benchmark::Counter(
        static_cast<double>(a.size() + b.size()),
        benchmark::Counter::kIsIterationInvariantRate);
}

void BM_singles_postselect(benchmark::State &state) {
    auto a = synthetic_tags(3, 1'000'000, 500e3);
    for (auto _ : state) {
        auto kept = postselect_singles(a, 10'000'000);
        benchmark::DoNotOptimize(kept.data());
    }
    state.counters["tags/s"] = benchmark::Counter(
        static_cast<double>(a.size()), benchmark::Counter::kIsIterationInvariantRate);
}

BENCHMARK(BM_emissions_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_emissions_openmp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_jsa_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_jsa_openmp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_pair_scan)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_singles_postselect)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
