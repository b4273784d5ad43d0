#pragma once

// Ground truth by full scan, accuracy measures and index statistics.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dumpy/dataset.hpp"
#include "dumpy/distance.hpp"
#include "dumpy/index.hpp"
#include "dumpy/knn.hpp"

namespace dumpy {

using Answers = std::vector<std::vector<Neighbor>>;

/// Exact kNN of every query over the whole dataset (both sides z-normalized),
/// ties by ordinal. DTW scans filter with LB_Keogh and abandon early.
Answers brute_force_knn(const DatasetHandle& ds, const std::vector<std::vector<float>>& queries, std::size_t k,
                        DistanceKind dist, unsigned workers = 1);

struct GroundTruthKey {
    std::uint64_t dataset_hash = 0;
    std::uint64_t query_hash = 0;
    std::uint32_t k = 0;
    DistanceKind dist;

    bool operator==(const GroundTruthKey&) const = default;
};

std::uint64_t hash_dataset(const DatasetHandle& ds);
std::uint64_t hash_queries(const std::vector<std::vector<float>>& queries);

/// "DGT1" file: key, query count, then per query a u32 count and
/// (u64 ordinal, f64 distance) pairs.
void save_ground_truth(const std::filesystem::path& path, const GroundTruthKey& key, const Answers& answers);
/// Nullopt when the file is missing or keyed differently; FormatError when corrupt.
std::optional<Answers> load_ground_truth(const std::filesystem::path& path, const GroundTruthKey& key);

/// brute_force_knn with a cache file under `cache_dir` named after the key.
Answers cached_ground_truth(const DatasetHandle& ds, const std::vector<std::vector<float>>& queries, std::size_t k,
                            DistanceKind dist, const std::filesystem::path& cache_dir, unsigned workers = 1,
                            bool* hit = nullptr);

inline constexpr double kTieTolerance = 1e-6;

/// (1/k) * sum_i P(i) * rel(i). A result is relevant when its distance does
/// not exceed the true k-th distance by more than the tie tolerance.
double average_precision(std::span<const Neighbor> result, std::span<const Neighbor> truth, std::size_t k);
double map_score(const Answers& results, const Answers& truths, std::size_t k);

struct ErrorRatio {
    double mean = 1.0;             // over queries with at least one usable rank
    std::vector<double> per_query;  // NaN where every rank was skipped
    std::uint64_t skipped = 0;     // ranks with a zero true distance or no result
};

ErrorRatio error_ratio(const Answers& results, const Answers& truths, std::size_t k);

struct IndexStats {
    std::uint64_t leaves = 0;  // packs
    std::uint64_t nodes = 0;   // internal nodes and packs
    std::uint64_t internal = 0;
    std::uint32_t height = 0;  // deepest pack layer; the root is layer 0
    double fill_factor = 0.0;  // live records / (leaves * th)
    std::uint64_t oversized = 0;
    std::uint64_t series = 0;      // live originals
    std::uint64_t duplicates = 0;  // live fuzzy copies
    std::uint64_t structure_bytes = 0;
};

IndexStats index_stats(const Index& ix);

struct LatencySummary {
    double mean_ms = 0, p50_ms = 0, p90_ms = 0, p99_ms = 0, max_ms = 0;
};

/// Nearest-rank percentiles.
LatencySummary summarize_latency(std::vector<double> ms);

/// Reads a query file (dataset format) and z-normalizes every row.
std::vector<std::vector<float>> load_queries(const std::filesystem::path& path, std::size_t n);

}  // namespace dumpy
