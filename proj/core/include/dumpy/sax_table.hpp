#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dumpy/dataset.hpp"
#include "dumpy/series.hpp"

namespace dumpy {

/// Column-packed table of full-depth SAX words, one row per series ordinal.
/// On disk: "DSAX", w:u16, b:u16, count:u64, then count*w symbol bytes.
class SaxTable {
public:
    SaxTable() = default;
    SaxTable(int w, int bits);
    SaxTable(int w, int bits, std::vector<std::uint8_t> symbols);

    [[nodiscard]] int segments() const { return w_; }
    [[nodiscard]] int bits() const { return bits_; }
    [[nodiscard]] std::uint64_t size() const { return w_ == 0 ? 0 : symbols_.size() / w_; }
    [[nodiscard]] std::span<const std::uint8_t> row(SeriesId i) const {
        return {symbols_.data() + i * w_, static_cast<std::size_t>(w_)};
    }
    [[nodiscard]] const std::vector<std::uint8_t>& symbols() const { return symbols_; }

    SeriesId append(std::span<const std::uint8_t> row);
    void resize(std::uint64_t count) { symbols_.resize(count * w_); }
    [[nodiscard]] std::span<std::uint8_t> mutable_rows(std::uint64_t first, std::uint64_t count) {
        return {symbols_.data() + first * w_, count * w_};
    }

    void save(const std::filesystem::path& path) const;
    static SaxTable load(const std::filesystem::path& path);

    bool operator==(const SaxTable&) const = default;

private:
    int w_ = 0;
    int bits_ = 0;
    std::vector<std::uint8_t> symbols_;
};

/// Per-row PAA coefficients (count * w), kept alongside the SAX table when a
/// build needs real-valued segment means (fuzzy duplication).
struct PaaTable {
    int w = 0;
    std::vector<double> values;

    [[nodiscard]] std::span<const double> row(SeriesId i) const {
        return {values.data() + i * w, static_cast<std::size_t>(w)};
    }
};

/// Summarizes a block of raw rows: z-normalize, PAA, SAX. `paa_out` may be empty.
void summarize_rows(std::span<const float> raw, std::size_t n, int w, int bits, std::span<std::uint8_t> sax_out,
                    std::span<double> paa_out);

struct SaxTableOptions {
    std::uint64_t batch_series = 0;  // 0: derive from a 100 MB raw-data budget
    unsigned workers = 1;
    PaaTable* paa = nullptr;  // optional output
};

/// First build pass: one SAX row per series, in dataset order.
SaxTable build_sax_table(const DatasetHandle& ds, int w, int bits, const SaxTableOptions& opts = {});

}  // namespace dumpy
