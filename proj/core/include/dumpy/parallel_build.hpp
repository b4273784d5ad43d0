#pragma once

// Pipelined index construction. Stage 1 summarizes the data with a double
// raw buffer and splits the root; stage 2 writes the first-layer packs while
// stage 3 grows the deeper subtrees; stage 4 rescans the data and writes the
// remaining packs, interleaving reading, routing and flushing. The result is
// the same index, byte for byte, as Index::build.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dumpy/config.hpp"
#include "dumpy/dataset.hpp"
#include "dumpy/index.hpp"

namespace dumpy {

struct BuildPipelinePlan {
    unsigned sax_workers = 5;
    unsigned subtree_workers = 5;
    unsigned routing_workers = 5;
    unsigned flush_workers = 5;
    std::uint64_t buffer_series = 0;    // rows per raw buffer (F1 and F2 alike), 0: 16 MB worth
    std::size_t sbuffer_records = 256;  // records staged per pack before a flush

    static BuildPipelinePlan uniform(unsigned workers);
    /// Throws InvalidArgument when a count is zero.
    void validate() const;
    /// Every count is one: stages run back to back with no overlap.
    [[nodiscard]] bool serial() const;
};

struct StageReport {
    std::string name;
    double start_seconds = 0;  // from the start of the build
    double wall_seconds = 0;
    std::uint64_t read_bytes = 0;
    std::uint64_t write_bytes = 0;
};

struct PipelineEvent {
    std::uint64_t seq = 0;
    int stage = 0;  // 1..4
    bool begin = true;
};

struct FlushRecord {
    NodeId pack = kNoNode;
    std::uint32_t file = 0;
    std::uint64_t first_slot = 0;
    std::uint64_t records = 0;
};

struct PipelineReport {
    std::array<StageReport, 4> stages;
    double wall_seconds = 0;
    double io_seconds = 0;       // summed over threads: raw reads and leaf writes
    double compute_seconds = 0;  // summed over threads: summarizing, growing, routing
    double overlap_fraction = 0;  // share of I/O time hidden behind computation
    std::vector<PipelineEvent> events;
    std::vector<FlushRecord> flushes;
};

Index parallel_build(const DatasetHandle& ds, const IndexConfig& cfg, const std::filesystem::path& dir,
                     const BuildPipelinePlan& plan = {}, PipelineReport* report = nullptr);

/// Human-readable stage table.
std::string format_pipeline_report(const PipelineReport& r);

}  // namespace dumpy
