#include "dumpy/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "dumpy/series.hpp"

namespace dumpy {

std::filesystem::path sidecar_path(const std::filesystem::path& data) {
    return std::filesystem::path(data.string() + ".json");
}

void write_sidecar(const DatasetHandle& ds) {
    nlohmann::json j;
    j["n"] = ds.n;
    j["count"] = ds.count;
    j["encoding"] = ds.encoding;
    std::ofstream out(sidecar_path(ds.path));
    if (!out) throw StorageError("cannot write sidecar for '" + ds.path.string() + "'");
    out << j.dump(2) << '\n';
}

DatasetHandle open_dataset(const std::filesystem::path& path, std::optional<std::size_t> n) {
    DatasetHandle ds;
    ds.path = path;
    if (n) {
        ds.n = *n;
    } else {
        std::ifstream in(sidecar_path(path));
        if (!in) throw FormatError("dataset '" + path.string() + "' has no sidecar; pass the series length");
        nlohmann::json j;
        try {
            in >> j;
            ds.n = j.at("n").get<std::size_t>();
            ds.encoding = j.value("encoding", std::string("f32le"));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad sidecar for '" + path.string() + "': " + e.what());
        }
    }
    if (ds.encoding != "f32le") throw FormatError("unsupported dataset encoding '" + ds.encoding + "'");
    if (ds.n == 0) throw FormatError("dataset series length must be positive");
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) throw StorageError("cannot stat '" + path.string() + "': " + ec.message());
    if (size % ds.series_bytes() != 0) {
        throw FormatError("dataset '" + path.string() + "' size is not a multiple of n * 4 bytes");
    }
    ds.count = size / ds.series_bytes();
    return ds;
}

DatasetHandle write_dataset(const std::filesystem::path& path, std::size_t n, std::span<const float> rows) {
    if (n == 0 || rows.size() % n != 0) throw InvalidArgument("write_dataset: rows must be a multiple of n");
    File f(path, File::Mode::Create);
    f.write_at(0, std::as_bytes(rows));
    DatasetHandle ds{path, n, rows.size() / n};
    write_sidecar(ds);
    return ds;
}

DatasetReader::DatasetReader(const DatasetHandle& ds) : ds_(ds), file_(ds.path, File::Mode::Read) {}

void DatasetReader::read(std::uint64_t first, std::uint64_t count, std::span<float> out) const {
    if (first + count > ds_.count) throw InvalidArgument("DatasetReader: range past the end of the dataset");
    if (out.size() < count * ds_.n) throw InvalidArgument("DatasetReader: output buffer too small");
    file_.read_at(first * ds_.series_bytes(), std::as_writable_bytes(out.first(count * ds_.n)));
}

std::vector<float> DatasetReader::raw(std::uint64_t i) const {
    std::vector<float> s(ds_.n);
    read(i, 1, s);
    return s;
}

std::vector<float> DatasetReader::normalized(std::uint64_t i) const {
    const auto s = raw(i);
    return znormalize(std::span<const float>(s));
}

std::uint64_t batch_series_for_bytes(std::size_t n, std::uint64_t bytes) {
    return std::max<std::uint64_t>(1, bytes / (n * sizeof(float)));
}

void for_each_batch(const DatasetHandle& ds, std::uint64_t batch_series,
                    const std::function<void(std::uint64_t, std::span<const float>)>& fn) {
    DatasetReader reader(ds);
    batch_series = std::max<std::uint64_t>(1, batch_series);
    std::vector<float> buf(std::min(batch_series, std::max<std::uint64_t>(ds.count, 1)) * ds.n);
    for (std::uint64_t first = 0; first < ds.count; first += batch_series) {
        const std::uint64_t cnt = std::min(batch_series, ds.count - first);
        reader.read(first, cnt, buf);
        fn(first, std::span<const float>(buf.data(), cnt * ds.n));
    }
}

void normalize_into(std::span<const float> raw, std::span<float> out) {
    const auto z = znormalize(raw);
    std::copy(z.begin(), z.end(), out.begin());
}

std::vector<std::vector<float>> load_normalized(const DatasetHandle& ds) {
    std::vector<std::vector<float>> out;
    out.reserve(ds.count);
    for_each_batch(ds, batch_series_for_bytes(ds.n, 64u << 20), [&](std::uint64_t, std::span<const float> rows) {
        for (std::size_t off = 0; off < rows.size(); off += ds.n) {
            out.push_back(znormalize(rows.subspan(off, ds.n)));
        }
    });
    return out;
}

DatasetHandle gen_random_walk(std::uint64_t count, std::size_t n, std::uint64_t seed,
                              const std::filesystem::path& out) {
    if (count == 0 || n == 0) throw InvalidArgument("gen_random_walk: count and n must be >= 1");
    File f(out, File::Mode::Create);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step(0.0, 1.0);
    const std::uint64_t batch = batch_series_for_bytes(n, 16u << 20);
    std::vector<double> walk(n);
    std::vector<float> buf;
    buf.reserve(batch * n);
    std::uint64_t written = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            acc += step(rng);
            walk[t] = acc;
        }
        const auto z = znormalize(std::span<const double>(walk));
        for (double v : z) buf.push_back(static_cast<float>(v));
        if (buf.size() == batch * n || i + 1 == count) {
            f.write_at(written * n * sizeof(float), std::as_bytes(std::span<const float>(buf)));
            written += buf.size() / n;
            buf.clear();
        }
    }
    DatasetHandle ds{out, n, count};
    write_sidecar(ds);
    return ds;
}

DatasetHandle gen_noisy_queries(const DatasetHandle& base, std::uint64_t count, std::span<const double> snr_db,
                                std::uint64_t seed, const std::filesystem::path& out) {
    if (count == 0 || snr_db.empty()) throw InvalidArgument("gen_noisy_queries: need count >= 1 and an SNR list");
    if (base.count == 0) throw InvalidArgument("gen_noisy_queries: empty base dataset");
    DatasetReader reader(base);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint64_t> pick(0, base.count - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<float> rows;
    rows.reserve(count * base.n);
    std::vector<double> q(base.n);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto s = reader.normalized(pick(rng));
        // Normalized series have unit power, so noise sigma = 10^(-snr/20).
        const double sigma = std::pow(10.0, -snr_db[i % snr_db.size()] / 20.0);
        for (std::size_t t = 0; t < base.n; ++t) q[t] = s[t] + sigma * noise(rng);
        for (double v : znormalize(std::span<const double>(q))) rows.push_back(static_cast<float>(v));
    }
    return write_dataset(out, base.n, rows);
}

}  // namespace dumpy
