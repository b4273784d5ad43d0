#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dumpy/io.hpp"

namespace dumpy {

/// A flat dataset file: headerless little-endian f32, row-major, `count` series
/// of length `n`. The length lives in a JSON sidecar `<path>.json`.
struct DatasetHandle {
    std::filesystem::path path;
    std::size_t n = 0;
    std::uint64_t count = 0;
    std::string encoding = "f32le";

    [[nodiscard]] std::uint64_t series_bytes() const { return n * sizeof(float); }
    [[nodiscard]] std::uint64_t bytes() const { return count * series_bytes(); }
};

std::filesystem::path sidecar_path(const std::filesystem::path& data);
void write_sidecar(const DatasetHandle& ds);

/// Opens a dataset; the length comes from `n` or, when absent, from the sidecar.
/// Throws FormatError when the file size is not a multiple of n * 4.
DatasetHandle open_dataset(const std::filesystem::path& path, std::optional<std::size_t> n = std::nullopt);

/// Writes `rows` (count * n floats) verbatim and emits the sidecar.
DatasetHandle write_dataset(const std::filesystem::path& path, std::size_t n, std::span<const float> rows);

class DatasetReader {
public:
    explicit DatasetReader(const DatasetHandle& ds);

    [[nodiscard]] const DatasetHandle& handle() const { return ds_; }
    /// Reads raw rows [first, first + count) into `out` (count * n floats).
    void read(std::uint64_t first, std::uint64_t count, std::span<float> out) const;
    [[nodiscard]] std::vector<float> raw(std::uint64_t i) const;
    [[nodiscard]] std::vector<float> normalized(std::uint64_t i) const;

private:
    DatasetHandle ds_;
    File file_;
};

/// Number of series per batch for a byte budget (at least one).
std::uint64_t batch_series_for_bytes(std::size_t n, std::uint64_t bytes);

/// Invokes `fn(first, rows)` for consecutive batches of raw rows.
void for_each_batch(const DatasetHandle& ds, std::uint64_t batch_series,
                    const std::function<void(std::uint64_t, std::span<const float>)>& fn);

/// Z-normalizes in double precision and stores as float.
void normalize_into(std::span<const float> raw, std::span<float> out);

/// Every series of a (small) dataset, z-normalized. Used for query workloads.
std::vector<std::vector<float>> load_normalized(const DatasetHandle& ds);

/// Cumulative sums of i.i.d. N(0,1) steps, z-normalized on write. Deterministic per seed.
DatasetHandle gen_random_walk(std::uint64_t count, std::size_t n, std::uint64_t seed,
                              const std::filesystem::path& out);

/// Queries built from randomly chosen dataset series plus Gaussian noise at the
/// given signal-to-noise ratios (dB, cycled), z-normalized on write.
DatasetHandle gen_noisy_queries(const DatasetHandle& base, std::uint64_t count, std::span<const double> snr_db,
                                std::uint64_t seed, const std::filesystem::path& out);

}  // namespace dumpy
