#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dumpy/distance.hpp"
#include "dumpy/split.hpp"

namespace dumpy {

/// Every knob of an index. Persisted as config.json next to the tree file.
struct IndexConfig {
    static constexpr int kVersion = 1;

    std::size_t n = 256;  // series length
    int w = 16;           // segments
    int bits = 8;         // bits per SAX symbol, cardinality 2^bits
    std::size_t th = 10000;
    double alpha = 0.2;
    double fill_low = 0.5;
    double fill_high = 3.0;
    double rho = 0.5;
    double fuzzy = 0.0;  // fraction of the interval width, 0 disables duplication
    int max_replication = 3;
    DistanceKind distance;
    bool binary_split = false;
    bool exhaustive_split = false;
    std::uint32_t repack_after = 8;  // extractions before a parent's packs are redone

    /// Throws InvalidArgument on inconsistent values.
    void validate() const;

    [[nodiscard]] std::uint32_t cardinality() const { return 1u << bits; }
    [[nodiscard]] SplitParams split_params() const;

    bool operator==(const IndexConfig&) const = default;
};

std::string config_to_json(const IndexConfig& cfg);
/// Throws FormatError on unknown versions or malformed documents.
IndexConfig config_from_json(const std::string& text);

void save_config(const IndexConfig& cfg, const std::filesystem::path& path);
IndexConfig load_config(const std::filesystem::path& path);

}  // namespace dumpy
