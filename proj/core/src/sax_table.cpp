#include "dumpy/sax_table.hpp"

#include <algorithm>

#include "dumpy/thread_pool.hpp"

namespace dumpy {

namespace {

void check_shape(int w, int bits) {
    if (w < 1 || w > kMaxSegments) throw InvalidArgument("SaxTable: segment count out of range");
    if (bits < 1 || bits > kMaxBits) throw InvalidArgument("SaxTable: bit depth out of range");
}

}  // namespace

SaxTable::SaxTable(int w, int bits) : w_(w), bits_(bits) { check_shape(w, bits); }

SaxTable::SaxTable(int w, int bits, std::vector<std::uint8_t> symbols)
    : w_(w), bits_(bits), symbols_(std::move(symbols)) {
    check_shape(w, bits);
    if (symbols_.size() % static_cast<std::size_t>(w) != 0) throw InvalidArgument("SaxTable: ragged symbol matrix");
    const auto limit = static_cast<unsigned>(1u << bits);
    if (std::any_of(symbols_.begin(), symbols_.end(), [&](std::uint8_t s) { return s >= limit; })) {
        throw InvalidArgument("SaxTable: symbol exceeds cardinality");
    }
}

SeriesId SaxTable::append(std::span<const std::uint8_t> row) {
    if (row.size() != static_cast<std::size_t>(w_)) throw InvalidArgument("SaxTable::append: wrong row width");
    const SeriesId id = size();
    symbols_.insert(symbols_.end(), row.begin(), row.end());
    return id;
}

void SaxTable::save(const std::filesystem::path& path) const {
    ByteWriter out;
    out.put_magic("DSAX");
    out.put<std::uint16_t>(static_cast<std::uint16_t>(w_));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(bits_));
    out.put<std::uint64_t>(size());
    out.put_bytes(std::as_bytes(std::span<const std::uint8_t>(symbols_)));
    write_file(path, out.bytes());
}

SaxTable SaxTable::load(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader in(bytes, "SAX table '" + path.string() + "'");
    in.expect_magic("DSAX");
    const int w = in.get<std::uint16_t>();
    const int bits = in.get<std::uint16_t>();
    const auto count = in.get<std::uint64_t>();
    if (w < 1 || w > kMaxSegments || bits < 1 || bits > kMaxBits) throw FormatError("SAX table: bad header");
    constexpr std::size_t header = 4 + 2 + 2 + 8;
    if (bytes.size() != header + count * static_cast<std::uint64_t>(w)) {
        throw FormatError("SAX table '" + path.string() + "': size does not match header");
    }
    std::vector<std::uint8_t> symbols(count * w);
    std::memcpy(symbols.data(), bytes.data() + header, symbols.size());
    try {
        return SaxTable(w, bits, std::move(symbols));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("SAX table: ") + e.what());
    }
}

void summarize_rows(std::span<const float> raw, std::size_t n, int w, int bits, std::span<std::uint8_t> sax_out,
                    std::span<double> paa_out) {
    const SaxAlphabet alphabet(bits);
    const std::size_t rows = raw.size() / n;
    std::vector<float> z(n);
    for (std::size_t r = 0; r < rows; ++r) {
        normalize_into(raw.subspan(r * n, n), z);
        const auto p = paa(std::span<const float>(z), static_cast<std::size_t>(w));
        for (int s = 0; s < w; ++s) {
            sax_out[r * w + s] = alphabet.symbol(p[s]);
            if (!paa_out.empty()) paa_out[r * w + s] = p[s];
        }
    }
}

SaxTable build_sax_table(const DatasetHandle& ds, int w, int bits, const SaxTableOptions& opts) {
    if (w < 1 || ds.n % static_cast<std::size_t>(w) != 0) {
        throw InvalidArgument("build_sax_table: segment count must divide the series length");
    }
    SaxTable table(w, bits);
    table.resize(ds.count);
    if (opts.paa) {
        opts.paa->w = w;
        opts.paa->values.assign(ds.count * w, 0.0);
    }
    const std::uint64_t batch =
        opts.batch_series ? opts.batch_series : batch_series_for_bytes(ds.n, 100ull << 20);
    ThreadPool pool(opts.workers);
    for_each_batch(ds, batch, [&](std::uint64_t first, std::span<const float> rows) {
        const std::uint64_t count = rows.size() / ds.n;
        const std::uint64_t parts = std::min<std::uint64_t>(count, std::max(1u, pool.size()) * 4ull);
        pool.parallel_for(parts, [&](std::size_t p) {
            const std::uint64_t lo = count * p / parts;
            const std::uint64_t hi = count * (p + 1) / parts;
            auto sax = table.mutable_rows(first + lo, hi - lo);
            std::span<double> paa_out;
            if (opts.paa) paa_out = std::span<double>(opts.paa->values).subspan((first + lo) * w, (hi - lo) * w);
            summarize_rows(rows.subspan(lo * ds.n, (hi - lo) * ds.n), ds.n, w, bits, sax, paa_out);
        });
    });
    return table;
}

}  // namespace dumpy
