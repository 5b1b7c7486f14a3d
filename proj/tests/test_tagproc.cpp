#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "pairforge/errors.hpp"
#include "pairforge/tagproc.hpp"

using namespace pairforge;

namespace {

constexpr std::int64_t kUs = 1'000'000; // picoseconds per microsecond

std::vector<TimeTag> make_tags(std::initializer_list<std::int64_t> times,
                               std::uint16_t ch = 0) {
    std::vector<TimeTag> v;
    for (auto t : times) v.push_back({t, ch});
    return v;
}

// random sorted tag stream with exponential gaps
std::vector<TimeTag> random_tags(std::mt19937 &gen, std::size_t n, double mean_gap_ps,
                                 std::uint16_t ch = 0) {
    std::exponential_distribution<double> E(1.0 / mean_gap_ps);
    std::vector<TimeTag> v;
    v.reserve(n);
    double t = 0;
    for (std::size_t i = 0; i < n; ++i) {
        t += E(gen);
        v.push_back({static_cast<std::int64_t>(t), ch});
    }
    return v;
}

// Reference matcher, quadratic: commit candidate pairs in order of increasing
// |t_a - (t_b + offset)|, ties by smaller time sum then smaller t_a, each tag
// used at most once. Independent restatement of the documented rule.
std::uint64_t brute_coincidences(const std::vector<TimeTag> &a, const std::vector<TimeTag> &b,
                                 std::int64_t window_ps, std::int64_t offset_ps) {
    const std::int64_t half = window_ps / 2;
    struct Cand {
        std::int64_t d, sum, ta;
        std::size_t i, j;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            std::int64_t tb = b[j].time_ps + offset_ps;
            std::int64_t d = std::abs(a[i].time_ps - tb);
            if (d <= half) cands.push_back({d, a[i].time_ps + tb, a[i].time_ps, i, j});
        }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand &x, const Cand &y) {
        if (x.d != y.d) return x.d < y.d;
        if (x.sum != y.sum) return x.sum < y.sum;
        return x.ta < y.ta;
    });
    std::vector<char> ua(a.size(), 0), ub(b.size(), 0);
    std::uint64_t n = 0;
    for (const Cand &c : cands) {
        if (ua[c.i] || ub[c.j]) continue;
        ua[c.i] = ub[c.j] = 1;
        ++n;
    }
    return n;
}

std::filesystem::path temp_file(const char *name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

// ---------------------------------------------------------------------------
// file format
// ---------------------------------------------------------------------------

TEST_CASE("binary tag file layout is bit-exact") {
    auto path = temp_file("pf_golden.ptag");
    std::vector<TimeTag> tags{{0, 3}, {1, 1}, {1099511627776, 0}}; // 2^40
    write_tags(path, tags, TagFileFormat::binary);

    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 16 + 3 * 16);

    const unsigned char expected[64] = {
        // header: magic "PTAG", u16 version=1, u16 record_size=16, u64 count=3
        'P', 'T', 'A', 'G', 1, 0, 16, 0, 3, 0, 0, 0, 0, 0, 0, 0,
        // record: u16 channel, u16 reserved, u32 reserved, u64 time_ps
        3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
        1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0,
        0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0,
    };
    CHECK(std::memcmp(bytes.data(), expected, 64) == 0);

    auto back = read_all_tags(path);
    CHECK(back == tags);
    std::filesystem::remove(path);
}

TEST_CASE("csv interop round-trips and is format-inferred") {
    auto pcsv = temp_file("pf_tags.csv");
    auto pbin = temp_file("pf_tags.ptag");
    std::vector<TimeTag> tags{{5, 0}, {100, 1}, {100, 1}, {2345678901234, 7}};
    write_tags(pcsv, tags, TagFileFormat::csv);
    write_tags(pbin, tags, TagFileFormat::binary);

    // text content is one channel,time pair per line
    std::ifstream in(pcsv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "0,5");

    CHECK(read_all_tags(pcsv) == tags);
    CHECK(read_all_tags(pbin) == tags);

    TagFileReader r(pbin);
    CHECK(r.declared_count() == 4);
    std::filesystem::remove(pcsv);
    std::filesystem::remove(pbin);
}

TEST_CASE("tag readers fail loudly on bad input") {
    CHECK_THROWS_AS((void)read_all_tags("/nonexistent/nowhere.ptag"), IoError);

    auto path = temp_file("pf_corrupt.ptag");
    {
        std::ofstream out(path, std::ios::binary);
        out << "PTAGxxxxgarbage";
    }
    CHECK_THROWS_AS((void)read_all_tags(path), IoError);

    // binary file truncated mid-record
    {
        std::vector<TimeTag> tags{{1, 0}, {2, 0}};
        write_tags(path, tags, TagFileFormat::binary);
        std::filesystem::resize_file(path, 16 + 16 + 7);
    }
    CHECK_THROWS_AS((void)read_all_tags(path), IoError);

    // per-channel time order is enforced on read
    {
        std::ofstream out(path);
        out << "0,100\n0,50\n";
    }
    CHECK_THROWS_AS((void)read_all_tags(path), IoError);
    std::filesystem::remove(path);
}

// ---------------------------------------------------------------------------
// post-selection
// ---------------------------------------------------------------------------

TEST_CASE("singles post-selection keeps {0,50,95} out of {0,10,50,95} at 40 us") {
    auto tags = make_tags({0, 10 * kUs, 50 * kUs, 95 * kUs});
    auto kept = postselect_singles(tags, 40 * kUs);
    CHECK(kept == make_tags({0, 50 * kUs, 95 * kUs}));
}

TEST_CASE("singles post-selection basics") {
    CHECK(postselect_singles({}, 40 * kUs).empty());

    auto sparse = make_tags({0, 41 * kUs, 82 * kUs});
    CHECK(postselect_singles(sparse, 40 * kUs) == sparse); // spacing > tau: identity
    CHECK(postselect_singles(sparse, 0) == sparse);        // tau = 0: identity

    // boundary: a gap of exactly tau_sel is kept
    auto edge = make_tags({0, 40 * kUs});
    CHECK(postselect_singles(edge, 40 * kUs).size() == 2);
    auto inside = make_tags({0, 40 * kUs - 1});
    CHECK(postselect_singles(inside, 40 * kUs).size() == 1);
}

TEST_CASE("singles post-selection properties on random streams") {
    std::mt19937 gen(11);
    for (int trial = 0; trial < 10; ++trial) {
        auto tags = random_tags(gen, 2000, 20.0 * kUs);
        const std::int64_t tau = 40 * kUs;
        auto kept = postselect_singles(tags, tau);

        // all inter-tag gaps >= tau
        for (std::size_t i = 1; i < kept.size(); ++i)
            REQUIRE(kept[i].time_ps - kept[i - 1].time_ps >= tau);

        // idempotent
        CHECK(postselect_singles(kept, tau) == kept);

        // streaming scan agrees with the materializing version
        MemTagSource src(tags);
        auto scan = scan_singles(src, tau);
        CHECK(scan.n_raw == tags.size());
        CHECK(scan.n_kept == kept.size());
        CHECK(scan.last_ps == tags.back().time_ps);
    }
}

TEST_CASE("pair post-selection keeps a partner inside the window") {
    // A clicks at 0; B clicks 200 ps later: B is within the 500 ps window of
    // the kept A event, so both survive although B falls in the blocked span
    auto res = postselect_coincidence_pair(make_tags({0}, 0), make_tags({200}, 1),
                                           40 * kUs, 500);
    CHECK(res.a == make_tags({0}, 0));
    CHECK(res.b == make_tags({200}, 1));
    // blocked span is the union [0, 40us) U [200, 40us + 200)
    CHECK(res.blocked_ps == 40 * kUs + 200);
}

TEST_CASE("pair post-selection discards a mid-block event outside the window") {
    auto res = postselect_coincidence_pair(make_tags({0}, 0), make_tags({10 * kUs}, 1),
                                           40 * kUs, 500);
    CHECK(res.a == make_tags({0}, 0));
    CHECK(res.b.empty());
    CHECK(res.blocked_ps == 40 * kUs);
}

TEST_CASE("pair post-selection passes sparse disjoint streams unchanged") {
    auto a = make_tags({0, 100 * kUs, 200 * kUs}, 0);
    auto b = make_tags({50 * kUs, 150 * kUs, 250 * kUs}, 1);
    auto res = postselect_coincidence_pair(a, b, 40 * kUs, 500);
    CHECK(res.a == a);
    CHECK(res.b == b);
}

TEST_CASE("pair post-selection never keeps a blocked event outside the window") {
    std::mt19937 gen(22);
    const std::int64_t tau = 40 * kUs, win = 500;
    for (int trial = 0; trial < 8; ++trial) {
        auto a = random_tags(gen, 1500, 15 * kUs, 0);
        auto b = random_tags(gen, 1500, 15 * kUs, 1);
        auto res = postselect_coincidence_pair(a, b, tau, win);

        // merge kept events and re-check the rule event by event
        std::vector<TimeTag> merged;
        merged.insert(merged.end(), res.a.begin(), res.a.end());
        merged.insert(merged.end(), res.b.begin(), res.b.end());
        std::stable_sort(merged.begin(), merged.end(),
                         [](const TimeTag &x, const TimeTag &y) { return x.time_ps < y.time_ps; });
        for (std::size_t i = 1; i < merged.size(); ++i) {
            std::int64_t gap = merged[i].time_ps - merged[i - 1].time_ps;
            bool ready = gap >= tau;
            bool partner = merged[i].channel != merged[i - 1].channel && gap <= win;
            REQUIRE((ready || partner));
        }

        // fused streaming scan sees the same survivors and coincidences
        MemTagSource sa(a), sb(b);
        auto scan = scan_pair(sa, sb, tau, win);
        CHECK(scan.a.n_kept == res.a.size());
        CHECK(scan.b.n_kept == res.b.size());
        CHECK(scan.blocked_ps == res.blocked_ps);
        CHECK(scan.coincidences == count_coincidences(res.a, res.b, win));
    }
}

TEST_CASE("ready time accounting") {
    CHECK(ready_time_ps(1'000'000 * kUs, 0, 40 * kUs) == 1'000'000 * kUs); // no tags
    // 10 kept tags at 40 us each over 1 s -> 0.9996 s
    CHECK(ready_time_ps(1'000'000 * kUs, 10, 40 * kUs) == 999'600 * kUs);
    // over-subscribed clips at zero instead of going negative
    CHECK(ready_time_ps(100 * kUs, 5, 40 * kUs) == 0);
}

// ---------------------------------------------------------------------------
// coincidence counting
// ---------------------------------------------------------------------------

TEST_CASE("identical streams are fully matched") {
    std::mt19937 gen(33);
    auto a = random_tags(gen, 500, 1000.0);
    CHECK(count_coincidences(a, a, 10) == a.size());
    CHECK(count_coincidences(a, a, 0) == a.size()); // window 0: exact equality
}

TEST_CASE("matching agrees with the quadratic reference on random streams") {
    std::mt19937 gen(44);
    std::uniform_int_distribution<int> nd(0, 600);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t na = static_cast<std::size_t>(nd(gen));
        std::size_t nb = static_cast<std::size_t>(nd(gen));
        // gaps comparable to the window so conflict clusters actually form
        auto a = random_tags(gen, na, 150.0, 0);
        auto b = random_tags(gen, nb, 150.0, 1);
        for (std::int64_t w : {0L, 101L, 500L}) {
            for (std::int64_t off : {0L, 777L}) {
                CAPTURE(trial);
                CAPTURE(w);
                CAPTURE(off);
                REQUIRE(count_coincidences(a, b, w, off) == brute_coincidences(a, b, w, off));
            }
        }
    }
}

TEST_CASE("matching is symmetric under stream swap with negated offset") {
    std::mt19937 gen(55);
    for (int trial = 0; trial < 40; ++trial) {
        auto a = random_tags(gen, 400, 120.0, 0);
        auto b = random_tags(gen, 350, 140.0, 1);
        for (std::int64_t off : {0L, 333L}) {
            REQUIRE(count_coincidences(a, b, 200, off) ==
                    count_coincidences(b, a, 200, -off));
        }
    }
    // the case that breaks walk-order greedy matching
    auto a = make_tags({0, 3});
    auto b = make_tags({2, 4});
    CHECK(count_coincidences(a, b, 4) == count_coincidences(b, a, 4));
}

TEST_CASE("offsetting B is the same as shifting B's tags") {
    std::mt19937 gen(66);
    auto a = random_tags(gen, 800, 5000.0, 0);
    auto b = random_tags(gen, 800, 5000.0, 1);
    const std::int64_t off = 30303;
    auto b_shifted = b;
    for (auto &t : b_shifted) t.time_ps += off;

    CHECK(count_coincidences(a, b, 400, off) == count_coincidences(a, b_shifted, 400));

    MemTagSource s1a(a), s1b(b), s2a(a), s2b(b_shifted);
    auto r1 = scan_pair(s1a, s1b, 40 * kUs, 400, off);
    auto r2 = scan_pair(s2a, s2b, 40 * kUs, 400, 0);
    CHECK(r1.coincidences == r2.coincidences);
    CHECK(r1.a.n_kept == r2.a.n_kept);
    CHECK(r1.b.n_kept == r2.b.n_kept);
    CHECK(r1.blocked_ps == r2.blocked_ps);
}

TEST_CASE("unsorted streams are rejected") {
    auto bad = make_tags({100, 50});
    auto good = make_tags({0, 200});
    CHECK_THROWS_AS((void)count_coincidences(bad, good, 10), std::invalid_argument);
    CHECK_THROWS_AS((void)count_coincidences(good, bad, 10), std::invalid_argument);
    CHECK_THROWS_AS((void)postselect_singles(bad, 10), std::invalid_argument);
    CHECK_THROWS_AS((void)postselect_coincidence_pair(bad, good, 10, 5),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// triples
// ---------------------------------------------------------------------------

TEST_CASE("constructed triples are recovered exactly") {
    // herald at 1000 with both arms inside the window; herald at 5000 with
    // only arm 1; herald at 9000 with nothing
    auto arm1 = make_tags({1002, 4996}, 0);
    auto arm2 = make_tags({995, 7000}, 1);
    auto herald = make_tags({1000, 5000, 9000}, 2);
    auto t = count_triples(arm1, arm2, herald, 20);
    CHECK(t.c13 == 2);
    CHECK(t.c23 == 1);
    CHECK(t.c123 == 1);
    CHECK(t.n1 == 2);
    CHECK(t.n2 == 2);
    CHECK(t.n3 == 3);
}

TEST_CASE("triples require both arms on the same herald") {
    // each arm matches a different herald: two pairwise matches, no triple
    auto arm1 = make_tags({100}, 0);
    auto arm2 = make_tags({300}, 1);
    auto herald = make_tags({101, 299}, 2);
    auto t = count_triples(arm1, arm2, herald, 10);
    CHECK(t.c13 == 1);
    CHECK(t.c23 == 1);
    CHECK(t.c123 == 0);
}

TEST_CASE("single-photon streams cannot produce triples") {
    // one photon per pulse goes to exactly one arm: arms never fire together
    std::vector<TimeTag> arm1, arm2, herald;
    for (int i = 0; i < 2000; ++i) {
        std::int64_t t = 30303 * static_cast<std::int64_t>(i + 1);
        (i % 2 ? arm1 : arm2).push_back({t, static_cast<std::uint16_t>(i % 2)});
        herald.push_back({t + 3, 2});
    }
    auto t = count_triples(arm1, arm2, herald, 100);
    CHECK(t.c13 == arm1.size());
    CHECK(t.c23 == arm2.size());
    CHECK(t.c123 == 0);
}

TEST_CASE("herald offset shifts the triple scan") {
    auto arm1 = make_tags({1000}, 0);
    auto arm2 = make_tags({1004}, 1);
    auto herald = make_tags({501000}, 2); // one period away
    CHECK(count_triples(arm1, arm2, herald, 20).c123 == 0);
    auto t = count_triples(arm1, arm2, herald, 20, -500000);
    CHECK(t.c123 == 1);
}

// ---------------------------------------------------------------------------
// sources
// ---------------------------------------------------------------------------

TEST_CASE("file and memory sources drive the scans identically") {
    std::mt19937 gen(77);
    auto tags = random_tags(gen, 5000, 2000.0, 4);
    auto path = temp_file("pf_source_eq.ptag");
    write_tags(path, tags, TagFileFormat::binary);

    TagFileReader file_src(path);
    MemTagSource mem_src(tags);
    auto a = scan_singles(file_src, 5000);
    auto b = scan_singles(mem_src, 5000);
    CHECK(a.n_raw == b.n_raw);
    CHECK(a.n_kept == b.n_kept);
    CHECK(a.first_ps == b.first_ps);
    CHECK(a.last_ps == b.last_ps);

    // small chunked reads hit the refill path
    TagFileReader r2(path);
    std::vector<TimeTag> out(7);
    std::vector<TimeTag> collected;
    for (;;) {
        std::size_t n = r2.read(out.data(), out.size());
        if (n == 0) break;
        collected.insert(collected.end(), out.begin(), out.begin() + n);
    }
    CHECK(collected == tags);
    std::filesystem::remove(path);
}
