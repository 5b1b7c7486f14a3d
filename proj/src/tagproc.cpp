#include "pairforge/tagproc.hpp"

#include "pairforge/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

namespace pairforge {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'A', 'G'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kRecordSize = 16;
constexpr std::size_t kChunk = 1 << 16; // records per I/O chunk

#pragma pack(push, 1)
struct FileHeader {
    char magic[4];
    std::uint16_t version;
    std::uint16_t record_size;
    std::uint64_t record_count;
};
struct FileRecord {
    std::uint16_t channel;
    std::uint16_t reserved0;
    std::uint32_t reserved1;
    std::uint64_t time_ps;
};
#pragma pack(pop)
static_assert(sizeof(FileHeader) == 16 && sizeof(FileRecord) == 16);

[[noreturn]] void io_fail(const std::filesystem::path &p, const std::string &what) {
    throw IoError(p.string() + ": " + what);
}

} // namespace

namespace {

// spec contract for the span-based operations: unordered input is an error
void require_sorted(std::span<const TimeTag> tags, const char *which) {
    for (std::size_t i = 1; i < tags.size(); ++i)
        if (tags[i].time_ps < tags[i - 1].time_ps)
            throw std::invalid_argument(std::string(which) +
                                        " tag stream is not time-sorted");
}

} // namespace


// ---------------------------------------------------------------------------
// writer
// ---------------------------------------------------------------------------

struct TagWriter::Impl {
    std::filesystem::path path;
    TagFileFormat format;
    std::FILE *f = nullptr;
    std::uint64_t count = 0;
    std::vector<FileRecord> buf;
    bool closed = false;

    void flush_buf() {
        if (buf.empty()) return;
        if (std::fwrite(buf.data(), sizeof(FileRecord), buf.size(), f) != buf.size())
            io_fail(path, "short write");
        buf.clear();
    }
};

TagWriter::TagWriter(const std::filesystem::path &file, TagFileFormat format)
    : impl_(new Impl) {
    impl_->path = file;
    impl_->format = format;
    impl_->f = std::fopen(file.string().c_str(), "wb");
    if (!impl_->f) io_fail(file, "cannot open for writing");
    if (format == TagFileFormat::binary) {
        FileHeader h{};
        std::memcpy(h.magic, kMagic, 4);
        h.version = kVersion;
        h.record_size = kRecordSize;
        h.record_count = 0; // patched in close()
        if (std::fwrite(&h, sizeof h, 1, impl_->f) != 1) io_fail(file, "header write failed");
        impl_->buf.reserve(kChunk);
    }
}

void TagWriter::write(const TimeTag &tag) { write(std::span<const TimeTag>(&tag, 1)); }

void TagWriter::write(std::span<const TimeTag> tags) {
    if (impl_->closed) throw std::logic_error("write after close");
    if (impl_->format == TagFileFormat::binary) {
        for (const TimeTag &t : tags) {
            if (t.time_ps < 0) io_fail(impl_->path, "negative time cannot be serialized");
            impl_->buf.push_back(
                {t.channel, 0, 0, static_cast<std::uint64_t>(t.time_ps)});
            if (impl_->buf.size() >= kChunk) impl_->flush_buf();
        }
    } else {
        std::string line;
        for (const TimeTag &t : tags) {
            line.clear();
            line += std::to_string(t.channel);
            line += ',';
            line += std::to_string(t.time_ps);
            line += '\n';
            if (std::fwrite(line.data(), 1, line.size(), impl_->f) != line.size())
                io_fail(impl_->path, "short write");
        }
    }
    impl_->count += tags.size();
}

void TagWriter::close() {
    if (impl_->closed) return;
    impl_->closed = true;
    if (impl_->format == TagFileFormat::binary) {
        impl_->flush_buf();
        FileHeader h{};
        std::memcpy(h.magic, kMagic, 4);
        h.version = kVersion;
        h.record_size = kRecordSize;
        h.record_count = impl_->count;
        if (std::fseek(impl_->f, 0, SEEK_SET) != 0) io_fail(impl_->path, "seek failed");
        if (std::fwrite(&h, sizeof h, 1, impl_->f) != 1)
            io_fail(impl_->path, "header rewrite failed");
    }
    if (std::fclose(impl_->f) != 0) io_fail(impl_->path, "close failed");
    impl_->f = nullptr;
}

TagWriter::~TagWriter() {
    try {
        close();
    } catch (...) {
        // destructor must not throw; an explicit close() reports errors
    }
}

// ---------------------------------------------------------------------------
// reader
// ---------------------------------------------------------------------------

struct TagFileReader::Impl {
    std::filesystem::path path;
    std::FILE *f = nullptr;
    bool binary = false;
    std::uint64_t declared = 0;
    std::uint64_t seen = 0;
    std::vector<FileRecord> buf;
    std::string line;
    // per-channel monotonicity check
    std::array<std::int64_t, 65536> last_time{};
    std::array<bool, 65536> seen_ch{};

    ~Impl() {
        if (f) std::fclose(f);
    }

    void check_order(std::uint16_t ch, std::int64_t t) {
        if (seen_ch[ch] && t < last_time[ch])
            io_fail(path, "tags on channel " + std::to_string(ch) +
                              " not time-sorted near record " + std::to_string(seen));
        seen_ch[ch] = true;
        last_time[ch] = t;
    }
};

TagFileReader::TagFileReader(const std::filesystem::path &file) : impl_(new Impl) {
    impl_->path = file;
    impl_->f = std::fopen(file.string().c_str(), "rb");
    if (!impl_->f) io_fail(file, "cannot open");
    char magic[4] = {};
    std::size_t got = std::fread(magic, 1, 4, impl_->f);
    if (got == 4 && std::memcmp(magic, kMagic, 4) == 0) {
        impl_->binary = true;
        FileHeader h{};
        std::memcpy(h.magic, magic, 4);
        if (std::fread(&h.version, 1, sizeof h - 4, impl_->f) != sizeof h - 4)
            io_fail(file, "truncated header");
        if (h.version != kVersion)
            io_fail(file, "unsupported tag file version " + std::to_string(h.version));
        if (h.record_size != kRecordSize)
            io_fail(file, "unexpected record size " + std::to_string(h.record_size));
        impl_->declared = h.record_count;
        impl_->buf.reserve(kChunk);
    } else {
        // text interop: rewind and parse "channel,time_ps" lines
        std::rewind(impl_->f);
    }
}

TagFileReader::~TagFileReader() = default;

std::uint64_t TagFileReader::declared_count() const { return impl_->declared; }

std::size_t TagFileReader::read(TimeTag *out, std::size_t max) {
    Impl &im = *impl_;
    if (max == 0) return 0;
    if (im.binary) {
        std::size_t want = std::min(max, kChunk);
        im.buf.resize(want);
        std::size_t got = std::fread(im.buf.data(), sizeof(FileRecord), want, im.f);
        if (got < want && std::ferror(im.f)) io_fail(im.path, "read error");
        for (std::size_t i = 0; i < got; ++i) {
            const FileRecord &r = im.buf[i];
            if (r.time_ps > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
                io_fail(im.path, "time overflows signed picoseconds");
            out[i] = {static_cast<std::int64_t>(r.time_ps), r.channel};
            ++im.seen;
            im.check_order(r.channel, out[i].time_ps);
        }
        if (got == 0) {
            if (im.seen != im.declared)
                io_fail(im.path, "record count mismatch: header says " +
                                     std::to_string(im.declared) + ", file holds " +
                                     std::to_string(im.seen));
        }
        return got;
    }
    std::size_t n = 0;
    while (n < max) {
        int c = std::fgetc(im.f);
        if (c == EOF) break;
        im.line.clear();
        while (c != EOF && c != '\n') {
            im.line.push_back(static_cast<char>(c));
            c = std::fgetc(im.f);
        }
        std::string_view sv(im.line);
        if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
        while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\r')) sv.remove_prefix(1);
        while (!sv.empty() && (sv.back() == ' ' || sv.back() == '\r')) sv.remove_suffix(1);
        if (sv.empty()) continue;
        ++im.seen;
        auto comma = sv.find(',');
        unsigned long ch = 0;
        std::int64_t t = 0;
        auto fail = [&] {
            io_fail(im.path, "bad text record " + std::to_string(im.seen) + ": '" +
                                 std::string(sv) + "'");
        };
        if (comma == std::string_view::npos) fail();
        auto r1 = std::from_chars(sv.data(), sv.data() + comma, ch);
        if (r1.ec != std::errc() || r1.ptr != sv.data() + comma || ch > 0xFFFF) fail();
        auto rest = sv.substr(comma + 1);
        auto r2 = std::from_chars(rest.data(), rest.data() + rest.size(), t);
        if (r2.ec != std::errc() || r2.ptr != rest.data() + rest.size()) fail();
        out[n] = {t, static_cast<std::uint16_t>(ch)};
        im.check_order(out[n].channel, t);
        ++n;
    }
    return n;
}

std::size_t MemTagSource::read(TimeTag *out, std::size_t max) {
    std::size_t n = std::min(max, tags_.size() - pos_);
    std::copy_n(tags_.begin() + static_cast<std::ptrdiff_t>(pos_), n, out);
    pos_ += n;
    return n;
}

std::vector<TimeTag> read_all_tags(const std::filesystem::path &file) {
    TagFileReader r(file);
    std::vector<TimeTag> out;
    std::vector<TimeTag> chunk(kChunk);
    while (std::size_t got = r.read(chunk.data(), chunk.size()))
        out.insert(out.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(got));
    return out;
}

void write_tags(const std::filesystem::path &file, std::span<const TimeTag> tags,
                TagFileFormat format) {
    TagWriter w(file, format);
    w.write(tags);
    w.close();
}

// ---------------------------------------------------------------------------
// post-selection
// ---------------------------------------------------------------------------

std::vector<TimeTag> postselect_singles(std::span<const TimeTag> tags,
                                        std::int64_t tau_sel_ps) {
    require_sorted(tags, "singles");
    std::vector<TimeTag> out;
    out.reserve(tags.size());
    bool any = false;
    std::int64_t last = 0;
    for (const TimeTag &t : tags) {
        if (!any || t.time_ps - last >= tau_sel_ps) {
            out.push_back(t);
            last = t.time_ps;
            any = true;
        }
    }
    return out;
}

std::int64_t ready_time_ps(std::int64_t total_ps, std::uint64_t n_kept,
                           std::int64_t tau_sel_ps) {
    // one tau_sel block per kept tag; negative values clip to zero
    double blocked = static_cast<double>(n_kept) * static_cast<double>(tau_sel_ps);
    if (blocked >= static_cast<double>(total_ps)) return 0;
    return total_ps - static_cast<std::int64_t>(n_kept) * tau_sel_ps;
}

SinglesScanResult scan_singles(TagSource &src, std::int64_t tau_sel_ps) {
    SinglesScanResult res;
    std::vector<TimeTag> chunk(kChunk);
    bool any = false;
    std::int64_t last = 0;
    while (std::size_t got = src.read(chunk.data(), chunk.size())) {
        for (std::size_t i = 0; i < got; ++i) {
            std::int64_t t = chunk[i].time_ps;
            if (!any) res.first_ps = t;
            res.last_ps = t;
            ++res.n_raw;
            if (!any || t - last >= tau_sel_ps) {
                ++res.n_kept;
                last = t;
                any = true;
            }
        }
    }
    return res;
}

namespace {

// Pair post-selection state machine: a kept event blocks both channels for
// tau_sel; a tag on the other channel within the coincidence window of the
// last kept tag is kept as its partner and restarts the block. blocked_ps
// accumulates the union of the blocks (the partner restart extends, never
// double-counts).
class PairPostselector {
  public:
    PairPostselector(std::int64_t tau_sel_ps, std::int64_t window_ps)
        : tau_(tau_sel_ps), half_window_(window_ps / 2) {}

    bool feed(std::int64_t t, int side) {
        if (any_ && t < block_end_) {
            if (side != last_side_ && t - last_t_ <= half_window_) {
                blocked_ += t + tau_ - block_end_; // extension, equals t - last_t_
                keep(t, side);
                return true;
            }
            return false;
        }
        blocked_ += tau_;
        keep(t, side);
        return true;
    }

    std::int64_t blocked_ps() const { return blocked_; }

  private:
    void keep(std::int64_t t, int side) {
        last_t_ = t;
        last_side_ = side;
        block_end_ = t + tau_;
        any_ = true;
    }

    std::int64_t tau_, half_window_;
    std::int64_t block_end_ = 0, last_t_ = 0, blocked_ = 0;
    int last_side_ = -1;
    bool any_ = false;
};

// Greedy nearest-pair coincidence matching on two sorted streams. Tags are
// grouped into conflict clusters (maximal runs where consecutive merged tags
// are within window/2 of each other); within a cluster, candidate pairs with
// |t_a - t_b'| <= window/2 are committed in order of increasing distance
// (ties: smaller t_a + t_b', then smaller t_a), each tag used at most once.
// Distance-priority makes the count symmetric under swapping the streams
// with negated offset. Clusters are tiny when the window is small against
// the inter-tag gaps (the physical regime), so memory tracks the cluster,
// not the stream. on_match(b_seq) reports the matched B tag's input index.
class GreedyMatcher {
  public:
    GreedyMatcher(std::int64_t window_ps, std::int64_t offset_b_ps)
        : half_(window_ps / 2), off_(offset_b_ps) {}

    // push_* must be called in merged (shifted-B) time order
    template <typename F> void push_a(std::int64_t t, F &&on_match) {
        push(t, -1, on_match);
    }
    template <typename F> void push_b(std::int64_t t_raw, F &&on_match) {
        push(t_raw + off_, static_cast<std::int64_t>(b_seq_++), on_match);
    }
    // no more input on either stream
    template <typename F> void finish(F &&on_match) { resolve(on_match); }

    std::uint64_t count() const { return count_; }

  private:
    struct Tag {
        std::int64_t t;
        std::int64_t b_seq; // < 0: A-side tag
    };

    template <typename F> void push(std::int64_t t, std::int64_t b_seq, F &&on_match) {
        if (!cluster_.empty() && t - cluster_.back().t > half_) resolve(on_match);
        cluster_.push_back({t, b_seq});
    }

    struct Cand {
        std::int64_t d, sum, ta;
        std::uint32_t ia, ib;
    };

    template <typename F> void resolve(F &&on_match) {
        if (cluster_.empty()) return;
        cands_.clear();
        for (std::uint32_t i = 0; i < cluster_.size(); ++i) {
            if (cluster_[i].b_seq >= 0) continue;
            for (std::uint32_t j = 0; j < cluster_.size(); ++j) {
                if (cluster_[j].b_seq < 0) continue;
                std::int64_t d = std::abs(cluster_[i].t - cluster_[j].t);
                if (d <= half_)
                    cands_.push_back({d, cluster_[i].t + cluster_[j].t, cluster_[i].t, i, j});
            }
        }
        std::sort(cands_.begin(), cands_.end(), [](const Cand &x, const Cand &y) {
            if (x.d != y.d) return x.d < y.d;
            if (x.sum != y.sum) return x.sum < y.sum;
            return x.ta < y.ta;
        });
        used_.assign(cluster_.size(), 0);
        for (const Cand &c : cands_) {
            if (used_[c.ia] || used_[c.ib]) continue;
            used_[c.ia] = used_[c.ib] = 1;
            ++count_;
            on_match(static_cast<std::uint64_t>(cluster_[c.ib].b_seq));
        }
        cluster_.clear();

        // keep the scratch vectors from growing without bound after a
        // pathological cluster
        if (cands_.capacity() > 1u << 16) {
            cands_.shrink_to_fit();
            used_.shrink_to_fit();
        }
    }

    std::int64_t half_, off_;
    std::vector<Tag> cluster_;
    std::vector<Cand> cands_;
    std::vector<char> used_;
    std::uint64_t b_seq_ = 0;
    std::uint64_t count_ = 0;
};

// chunked two-stream merge walk; ties resolve to stream A
template <typename OnA, typename OnB>
void merge_streams(TagSource &a, TagSource &b, std::int64_t offset_b_ps, OnA &&on_a,
                   OnB &&on_b) {
    std::vector<TimeTag> abuf(kChunk), bbuf(kChunk);
    std::size_t na = a.read(abuf.data(), abuf.size()), ia = 0;
    std::size_t nb = b.read(bbuf.data(), bbuf.size()), ib = 0;
    auto refill_a = [&] {
        if (ia == na && na > 0) {
            na = a.read(abuf.data(), abuf.size());
            ia = 0;
        }
    };
    auto refill_b = [&] {
        if (ib == nb && nb > 0) {
            nb = b.read(bbuf.data(), bbuf.size());
            ib = 0;
        }
    };
    while (true) {
        refill_a();
        refill_b();
        bool ha = ia < na, hb = ib < nb;
        if (!ha && !hb) break;
        if (ha && (!hb || abuf[ia].time_ps <= bbuf[ib].time_ps + offset_b_ps))
            on_a(abuf[ia++].time_ps);
        else
            on_b(bbuf[ib++].time_ps + offset_b_ps); // callbacks see shifted B times
    }
}

} // namespace

PairPostselectResult postselect_coincidence_pair(std::span<const TimeTag> a,
                                                 std::span<const TimeTag> b,
                                                 std::int64_t tau_sel_ps,
                                                 std::int64_t window_ps) {
    require_sorted(a, "A");
    require_sorted(b, "B");
    PairPostselectResult out;
    PairPostselector ps(tau_sel_ps, window_ps);
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() || ib < b.size()) {
        bool take_a =
            ia < a.size() && (ib >= b.size() || a[ia].time_ps <= b[ib].time_ps);
        if (take_a) {
            if (ps.feed(a[ia].time_ps, 0)) out.a.push_back(a[ia]);
            ++ia;
        } else {
            if (ps.feed(b[ib].time_ps, 1)) out.b.push_back(b[ib]);
            ++ib;
        }
    }
    out.blocked_ps = ps.blocked_ps();
    return out;
}

std::uint64_t count_coincidences(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                 std::int64_t window_ps, std::int64_t offset_ps) {
    require_sorted(a, "A");
    require_sorted(b, "B");
    GreedyMatcher m(window_ps, offset_ps);
    auto nop = [](std::uint64_t) {};
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() || ib < b.size()) {
        bool take_a = ia < a.size() &&
                      (ib >= b.size() || a[ia].time_ps <= b[ib].time_ps + offset_ps);
        if (take_a)
            m.push_a(a[ia++].time_ps, nop);
        else
            m.push_b(b[ib++].time_ps, nop);
    }
    m.finish(nop);
    return m.count();
}

PairScanResult scan_pair(TagSource &a, TagSource &b, std::int64_t tau_sel_ps,
                         std::int64_t window_ps, std::int64_t offset_b_ps) {
    PairScanResult res;
    PairPostselector ps(tau_sel_ps, window_ps);
    GreedyMatcher matcher(window_ps, 0); // offset already applied in the merge
    auto nop = [](std::uint64_t) {};

    merge_streams(
        a, b, offset_b_ps,
        [&](std::int64_t t) {
            ++res.a.n_raw;
            if (res.a.n_raw == 1) res.a.first_ps = t;
            res.a.last_ps = t;
            if (ps.feed(t, 0)) {
                ++res.a.n_kept;
                matcher.push_a(t, nop);
            }
        },
        [&](std::int64_t t_shifted) {
            ++res.b.n_raw;
            if (res.b.n_raw == 1) res.b.first_ps = t_shifted;
            res.b.last_ps = t_shifted;
            if (ps.feed(t_shifted, 1)) {
                ++res.b.n_kept;
                matcher.push_b(t_shifted, nop);
            }
        });
    matcher.finish(nop);
    res.coincidences = matcher.count();
    res.blocked_ps = ps.blocked_ps();
    return res;
}

TripleCounts count_triples(std::span<const TimeTag> arm1, std::span<const TimeTag> arm2,
                           std::span<const TimeTag> herald, std::int64_t window_ps,
                           std::int64_t offset_herald_ps) {
    require_sorted(arm1, "arm 1");
    require_sorted(arm2, "arm 2");
    require_sorted(herald, "herald");
    TripleCounts out;
    out.n1 = arm1.size();
    out.n2 = arm2.size();
    out.n3 = herald.size();

    // pairwise greedy matches arm_k vs herald; heralds matched in both arms
    // form the triples
    std::vector<bool> matched1(herald.size(), false), matched2(herald.size(), false);
    auto run_arm = [&](std::span<const TimeTag> arm, std::vector<bool> &matched,
                       std::uint64_t &count) {
        GreedyMatcher m(window_ps, offset_herald_ps);
        auto on_match = [&](std::uint64_t seq) { matched[seq] = true; };
        std::size_t ia = 0, ih = 0;
        while (ia < arm.size() || ih < herald.size()) {
            bool take_a = ia < arm.size() &&
                          (ih >= herald.size() ||
                           arm[ia].time_ps <= herald[ih].time_ps + offset_herald_ps);
            if (take_a)
                m.push_a(arm[ia++].time_ps, on_match);
            else
                m.push_b(herald[ih++].time_ps, on_match);
        }
        m.finish(on_match);
        count = m.count();
    };
    run_arm(arm1, matched1, out.c13);
    run_arm(arm2, matched2, out.c23);
    for (std::size_t i = 0; i < herald.size(); ++i)
        if (matched1[i] && matched2[i]) ++out.c123;
    return out;
}

} // namespace pairforge
