#pragma once

// Private state of an Index and the helpers shared by the serial build, the
// parallel build, the fuzzy pass and the update path.

#include <functional>
#include <optional>
#include <utility>

#include "dumpy/index.hpp"

namespace dumpy {

struct Index::State {
    IndexConfig cfg;
    std::filesystem::path dir;
    SaxTable sax;
    std::optional<SaxAlphabet> alphabet;
    std::vector<Node> nodes;
    std::vector<File> files;
    // free record ranges (offset, capacity) per file, sorted by offset
    std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> free_lists;
    std::vector<std::uint64_t> file_end;  // records
    mutable std::shared_mutex mu;
    UpdateStats stats;

    [[nodiscard]] RecordLayout layout() const { return {cfg.n, cfg.w}; }
};

namespace detail {

struct IndexAccess {
    static Index::State& state(Index& ix) { return *ix.s_; }
    static const Index::State& state(const Index& ix) { return *ix.s_; }
    static Index make(std::unique_ptr<Index::State> s) {
        Index ix;
        ix.s_ = std::move(s);
        return ix;
    }
};

std::filesystem::path leaf_path(const std::filesystem::path& dir, std::uint32_t file);
std::filesystem::path tree_path(const std::filesystem::path& dir);
std::filesystem::path sax_path(const std::filesystem::path& dir);
std::filesystem::path config_path(const std::filesystem::path& dir);

/// Rows of a node sorted by their sid under `csl` (ties: ascending ordinal).
struct SidRows {
    std::vector<std::pair<Sid, SeriesId>> entries;

    [[nodiscard]] std::span<const std::pair<Sid, SeriesId>> of(Sid sid) const;
    /// Distinct sids in ascending order with their row counts.
    [[nodiscard]] std::vector<std::pair<Sid, std::uint64_t>> counts() const;
};

SidRows bucket_rows(const SaxTable& sax, std::span<const SeriesId> rows, const IsaxWord& isax,
                    std::span<const std::uint8_t> csl);

/// Children created by one split; `pending` lists internal children still to
/// be grown, with their rows.
struct SplitResult {
    std::vector<std::pair<NodeId, std::vector<SeriesId>>> pending;
};

/// Turns arena[id] into an internal node split on `csl` and creates its
/// children: internal ones (size > th) by ascending sid, then packs in packing
/// order. Pack slots hold their rows sorted by ordinal.
SplitResult split_node(std::vector<Node>& arena, NodeId id, std::span<const std::uint8_t> csl,
                       std::span<const SeriesId> rows, const SaxTable& sax, const IndexConfig& cfg);

/// Grows arena[id] over `rows` (more than th of them) until every leaf fits,
/// depth first. Unsplittable nodes become oversized packs.
void grow(std::vector<Node>& arena, NodeId id, std::vector<SeriesId> rows, const SaxTable& sax,
          const IndexConfig& cfg);

/// Makes arena[id] a single-member pack over `rows`.
void make_leaf(Node& node, std::vector<SeriesId> rows, bool oversized);

/// Root split on all segments. Returns the internal first-layer children that
/// still need a subtree.
SplitResult build_first_layer(std::vector<Node>& arena, const SaxTable& sax, const IndexConfig& cfg);

/// A first-layer subtree grown in a private arena (node 0 is its root).
std::vector<Node> build_subtree(const Node& proto, std::vector<SeriesId> rows, const SaxTable& sax,
                                const IndexConfig& cfg);

/// Replaces arena[at] with the subtree root and appends the rest, remapping ids.
void splice(std::vector<Node>& arena, NodeId at, std::vector<Node> subtree);

/// Recomputes size and leaf_count bottom-up.
void recompute_counts(std::vector<Node>& arena);

/// Leaf file of every root child: 0 for first-layer packs, 1.. for internal
/// root children in child order.
std::vector<std::uint32_t> root_child_files(const std::vector<Node>& arena);

/// Packs of one leaf file in layout order.
std::vector<NodeId> packs_of_file(const std::vector<Node>& arena, std::uint32_t file);

/// Assigns contiguous extents (capacity = used slots) to the packs of a file,
/// starting at record 0. Returns the file length in records.
std::uint64_t layout_file(std::vector<Node>& arena, std::uint32_t file);

/// Sorts the duplicate tail of every pack by ordinal.
void sort_duplicates(std::vector<Node>& arena);

/// Ordinal -> (pack, slot) for the packs accepted by `keep`.
struct SlotMap {
    std::vector<std::uint64_t> offsets;
    std::vector<std::pair<NodeId, std::uint64_t>> entries;

    [[nodiscard]] std::span<const std::pair<NodeId, std::uint64_t>> of(SeriesId ordinal) const {
        return {entries.data() + offsets[ordinal], entries.data() + offsets[ordinal + 1]};
    }
};

SlotMap build_slot_map(const std::vector<Node>& arena, std::uint64_t count, const std::function<bool(NodeId)>& keep);

/// Per-pack staging of contiguous slot runs, flushed as single writes.
class LeafWriter {
public:
    struct FlushEvent {
        NodeId pack;
        std::uint64_t first_slot;
        std::uint64_t records;
    };

    LeafWriter(std::vector<File>& files, const std::vector<Node>& arena, RecordLayout layout,
               std::size_t chunk_records = 256, std::uint64_t cap_bytes = 256ull << 20);

    void put(NodeId pack, std::uint64_t slot, std::span<const std::byte> record);
    void flush(NodeId pack);
    void flush_all();

    [[nodiscard]] std::uint64_t bytes_written() const { return bytes_written_; }
    void set_trace(std::vector<FlushEvent>* trace) { trace_ = trace; }

private:
    struct Buffer {
        std::uint64_t first_slot = 0;
        std::uint64_t records = 0;
        std::vector<std::byte> data;
    };

    std::vector<File>& files_;
    const std::vector<Node>& arena_;
    RecordLayout layout_;
    std::size_t chunk_;
    std::uint64_t cap_bytes_;
    std::uint64_t staged_bytes_ = 0;
    std::uint64_t bytes_written_ = 0;
    std::vector<Buffer> buffers_;
    std::vector<NodeId> dirty_;
    std::vector<FlushEvent>* trace_ = nullptr;
};

/// Fuzzy duplication over a grown tree. Phase `RootPacks` handles the
/// first-layer packs only; `Rest` handles everything else. Running both in
/// order is the complete pass.
enum class FuzzyPhase { RootPacks, Rest };

void fuzzy_duplicate(std::vector<Node>& arena, const SaxTable& sax, const PaaTable& paa, const IndexConfig& cfg,
                     FuzzyPhase phase, std::vector<std::uint8_t>& copies);

/// Creates empty leaf files and the free-list bookkeeping for `file_count` files.
void open_leaf_files(Index::State& st, std::uint32_t file_count, bool create);

}  // namespace detail
}  // namespace dumpy
