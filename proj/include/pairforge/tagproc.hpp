#pragma once
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace pairforge {

// One detector click. Times are integer picoseconds from run start.
struct TimeTag {
    std::int64_t time_ps = 0;
    std::uint16_t channel = 0;

    friend bool operator==(const TimeTag &, const TimeTag &) = default;
};

// Channel ids at and above this value are truth streams written by the
// simulator (emission times etc.), not detector clicks.
inline constexpr std::uint16_t kTruthChannelBase = 0xFF00;

// ---------------------------------------------------------------------------
// Tag files.
//
// Binary layout (little-endian), version 1:
//   header, 16 bytes: magic "PTAG" | u16 version | u16 record_size (16) |
//                     u64 record_count
//   record, 16 bytes: u16 channel | u16 reserved (0) | u32 reserved (0) |
//                     u64 time_ps
// Text interop: one "channel,time_ps" line per record.
// ---------------------------------------------------------------------------

enum class TagFileFormat { binary, csv };

class TagWriter {
  public:
    TagWriter(const std::filesystem::path &file, TagFileFormat format);
    ~TagWriter();
    TagWriter(const TagWriter &) = delete;
    TagWriter &operator=(const TagWriter &) = delete;

    void write(const TimeTag &tag);
    void write(std::span<const TimeTag> tags);
    // finalizes the header; implied by the destructor
    void close();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Chunked pull interface shared by file readers and in-memory spans so the
// scan algorithms below run identically on both. Implementations yield tags
// in file order; memory use is bounded by the chunk size, not stream length.
class TagSource {
  public:
    virtual ~TagSource() = default;
    // fills out[0..max), returns the count; 0 means end of stream
    virtual std::size_t read(TimeTag *out, std::size_t max) = 0;
};

class TagFileReader final : public TagSource {
  public:
    // format inferred from the PTAG magic; anything else is parsed as text
    explicit TagFileReader(const std::filesystem::path &file);
    ~TagFileReader() override;
    std::size_t read(TimeTag *out, std::size_t max) override;
    std::uint64_t declared_count() const; // binary header count (csv: 0)

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class MemTagSource final : public TagSource {
  public:
    explicit MemTagSource(std::span<const TimeTag> tags) : tags_(tags) {}
    std::size_t read(TimeTag *out, std::size_t max) override;

  private:
    std::span<const TimeTag> tags_;
    std::size_t pos_ = 0;
};

std::vector<TimeTag> read_all_tags(const std::filesystem::path &file);
void write_tags(const std::filesystem::path &file, std::span<const TimeTag> tags,
                TagFileFormat format = TagFileFormat::binary);

// ---------------------------------------------------------------------------
// Post-selection (software extended dead time).
// ---------------------------------------------------------------------------

// Greedy: keep a tag iff it is at least tau_sel after the last kept tag.
// tau_sel = 0 keeps everything.
std::vector<TimeTag> postselect_singles(std::span<const TimeTag> tags,
                                        std::int64_t tau_sel_ps);

// Live time remaining after removing one tau_sel block per kept tag.
std::int64_t ready_time_ps(std::int64_t total_ps, std::uint64_t n_kept,
                           std::int64_t tau_sel_ps);

struct SinglesScanResult {
    std::uint64_t n_raw = 0;
    std::uint64_t n_kept = 0;
    std::int64_t first_ps = 0;
    std::int64_t last_ps = 0;
};

// Streaming counterpart of postselect_singles (counts only).
SinglesScanResult scan_singles(TagSource &src, std::int64_t tau_sel_ps);

// Pair post-selection: a kept event blocks BOTH channels for tau_sel, except
// that a tag on the other channel within the coincidence window of the last
// kept tag is kept as its partner (and restarts the block). Returns the
// surviving streams plus the not-ready time actually blocked (union of
// blocks, so the partner restart does not double-count overlap).
struct PairPostselectResult {
    std::vector<TimeTag> a;
    std::vector<TimeTag> b;
    std::int64_t blocked_ps = 0;
};

PairPostselectResult postselect_coincidence_pair(std::span<const TimeTag> a,
                                                 std::span<const TimeTag> b,
                                                 std::int64_t tau_sel_ps,
                                                 std::int64_t window_ps);

// ---------------------------------------------------------------------------
// Coincidence counting.
// ---------------------------------------------------------------------------

// Greedy nearest-pair matching: candidate pairs with
// |t_a - (t_b + offset)| <= window/2 are committed in order of increasing
// time difference (ties: smaller t_a + t_b + offset, then smaller t_a), each
// tag used at most once. The count is symmetric under swapping the streams
// with a negated offset. Both inputs must be sorted.
std::uint64_t count_coincidences(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                 std::int64_t window_ps, std::int64_t offset_ps = 0);

// Fused streaming scan used by the analysis pipeline: pair post-selection and
// prompt-window coincidence counting in one pass, nothing materialized.
// offset_b_ps is added to every B time before any processing (accidental
// estimation shifts B by k pulse periods and reruns the identical scan).
struct PairScanResult {
    SinglesScanResult a;
    SinglesScanResult b;
    std::uint64_t coincidences = 0;
    std::int64_t blocked_ps = 0;
};

PairScanResult scan_pair(TagSource &a, TagSource &b, std::int64_t tau_sel_ps,
                         std::int64_t window_ps, std::int64_t offset_b_ps = 0);

// Heralded triple coincidences: pairwise greedy matches of each arm against
// the herald; c123 = heralds matched in both arms. offset_herald_ps shifts
// the herald stream (accidental estimation).
struct TripleCounts {
    std::uint64_t c13 = 0;
    std::uint64_t c23 = 0;
    std::uint64_t c123 = 0;
    std::uint64_t n1 = 0;
    std::uint64_t n2 = 0;
    std::uint64_t n3 = 0;
};

TripleCounts count_triples(std::span<const TimeTag> arm1, std::span<const TimeTag> arm2,
                           std::span<const TimeTag> herald, std::int64_t window_ps,
                           std::int64_t offset_herald_ps = 0);

} // namespace pairforge
