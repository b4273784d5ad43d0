#pragma once

// The on-disk index: a node arena (internal nodes and leaf packs), the SAX
// table that drives every split decision, and the leaf files holding the
// series records.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "dumpy/config.hpp"
#include "dumpy/dataset.hpp"
#include "dumpy/io.hpp"
#include "dumpy/sax_table.hpp"
#include "dumpy/series.hpp"

namespace dumpy {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;
inline constexpr NodeId kRootId = 0;

enum class NodeKind : std::uint8_t { Internal = 0, Pack = 1, Free = 2 };

/// A contiguous run of records inside one leaf file, in record units.
struct Extent {
    std::uint32_t file = 0;
    std::uint64_t offset = 0;
    std::uint64_t capacity = 0;

    bool operator==(const Extent&) const = default;
};

struct Node {
    NodeKind kind = NodeKind::Pack;
    bool oversized = false;  // could not be split further; may exceed th
    std::uint16_t layer = 0;
    NodeId parent = kNoNode;
    IsaxWord isax;
    std::vector<Sid> sids;         // member sids under the parent's split
    std::uint64_t size = 0;        // live records below this node, duplicates included
    std::uint32_t leaf_count = 0;  // packs below this node

    // internal nodes
    std::vector<std::uint8_t> csl;
    std::vector<NodeId> routing;  // 2^|csl| entries, kNoNode where unpopulated
    std::vector<NodeId> children;
    std::uint32_t extractions = 0;

    // packs
    std::uint8_t split_lambda = 0;
    std::uint8_t demotion_bits = 0;
    Extent extent;
    std::vector<SeriesId> slots;  // ordinal stored in each used slot
    std::vector<bool> duplicate;  // slot holds a fuzzy copy
    std::vector<bool> deleted;

    [[nodiscard]] bool is_internal() const { return kind == NodeKind::Internal; }
    [[nodiscard]] bool is_pack() const { return kind == NodeKind::Pack; }
    [[nodiscard]] std::uint64_t used() const { return slots.size(); }
    [[nodiscard]] std::uint64_t live() const;
    [[nodiscard]] NodeId child(Sid sid) const {
        return sid < routing.size() ? routing[sid] : kNoNode;
    }

    bool operator==(const Node&) const = default;
};

/// Record: n little-endian f32 values (z-normalized), w SAX bytes, u64 ordinal.
struct RecordLayout {
    std::size_t n = 0;
    int w = 0;

    [[nodiscard]] std::size_t bytes() const { return n * sizeof(float) + static_cast<std::size_t>(w) + 8; }
    void encode(std::span<const float> values, std::span<const std::uint8_t> sax, SeriesId ordinal,
                std::span<std::byte> out) const;
};

/// Decoded records of one pack, in slot order.
struct PackData {
    std::size_t n = 0;
    std::vector<float> values;
    std::vector<SeriesId> ordinals;

    [[nodiscard]] std::size_t count() const { return ordinals.size(); }
    [[nodiscard]] std::span<const float> series(std::size_t i) const { return {values.data() + i * n, n}; }
};

struct BuildOptions {
    std::uint64_t batch_series = 0;  // raw rows per batch, 0: 100 MB worth
    unsigned workers = 1;            // SAX-stage partitioning
};

struct UpdateStats {
    std::uint64_t inserts = 0;
    std::uint64_t deletes = 0;
    std::uint64_t splits = 0;       // packs turned into internal nodes
    std::uint64_t extractions = 0;  // members pulled out of multi-member packs
    std::uint64_t repacks = 0;
    std::uint64_t relocations = 0;  // extents moved to grow capacity
};

namespace detail {
struct IndexAccess;
}

/// Dumpy index bound to a directory: config.json, tree.bin, sax.bin and
/// leaf_NNNNN.bin. Queries may run concurrently; updates take the writer lock.
class Index {
public:
    Index();
    ~Index();
    Index(Index&&) noexcept;
    Index& operator=(Index&&) noexcept;

    /// Serial reference build: SAX pass, tree growth from SAX rows, packing,
    /// optional fuzzy duplication, then a second pass writing the leaf files.
    static Index build(const DatasetHandle& ds, const IndexConfig& cfg, const std::filesystem::path& dir,
                       const BuildOptions& opts = {});
    /// Loads a saved index. Throws FormatError on version, magic or shape
    /// mismatch (including `expected_n` when given).
    static Index open(const std::filesystem::path& dir, std::optional<std::size_t> expected_n = std::nullopt);
    /// Persists config, tree and SAX table. Leaf files are written in place.
    void save() const;

    [[nodiscard]] const IndexConfig& config() const;
    [[nodiscard]] const std::filesystem::path& dir() const;
    [[nodiscard]] const SaxTable& sax() const;
    [[nodiscard]] const SaxAlphabet& alphabet() const;
    [[nodiscard]] const std::vector<Node>& nodes() const;
    [[nodiscard]] const Node& node(NodeId id) const;
    [[nodiscard]] const Node& root() const { return node(kRootId); }
    [[nodiscard]] RecordLayout layout() const;
    [[nodiscard]] std::uint32_t file_count() const;
    [[nodiscard]] std::vector<NodeId> packs() const;
    /// Live original series (duplicates and deleted slots excluded).
    [[nodiscard]] std::uint64_t series_count() const;

    /// Reads every used slot of a pack, deleted ones included.
    [[nodiscard]] PackData read_pack(NodeId id) const;
    /// Descends by SAX routing; kNoNode when an internal node lacks the sid.
    [[nodiscard]] NodeId route(std::span<const std::uint8_t> sax) const;

    /// Adds a series (z-normalized here) and returns its new ordinal.
    SeriesId insert(std::span<const float> series);
    /// Removes a series and its fuzzy copies. False when it is not indexed.
    bool erase(SeriesId ordinal);
    [[nodiscard]] bool contains(SeriesId ordinal) const;

    [[nodiscard]] std::shared_lock<std::shared_mutex> read_lock() const;
    [[nodiscard]] const UpdateStats& update_stats() const;

    struct State;  // opaque outside the library

private:
    friend struct detail::IndexAccess;
    std::unique_ptr<State> s_;
};

/// Structural equality: nodes, routing, extents, slots and bitmaps.
bool same_structure(const Index& a, const Index& b);

}  // namespace dumpy
