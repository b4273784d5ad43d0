#pragma once

// Series summarization: z-normalization, PAA, SAX and iSAX words, and the
// routing bit-codes (sids) used to descend the index tree.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dumpy/error.hpp"

namespace dumpy {

using SeriesId = std::uint64_t;
using Sid = std::uint32_t;

/// Largest supported bit depth per SAX symbol (symbols are stored one per byte).
inline constexpr int kMaxBits = 8;
/// Largest supported segment count; the root fans out to 2^w children.
inline constexpr int kMaxSegments = 20;

/// Unbounded outer SAX regions are truncated to this value domain whenever a
/// finite width or midpoint is needed (split variances, fuzzy bands).
inline constexpr double kValueDomain = 4.0;

/// Population z-normalization. A constant input maps to all zeros.
template <typename T>
std::vector<T> znormalize(std::span<const T> raw) {
    if (raw.empty()) throw InvalidArgument("znormalize: empty series");
    double mean = 0.0;
    for (T v : raw) mean += static_cast<double>(v);
    mean /= static_cast<double>(raw.size());
    double var = 0.0;
    for (T v : raw) {
        const double d = static_cast<double>(v) - mean;
        var += d * d;
    }
    var /= static_cast<double>(raw.size());
    const double sd = std::sqrt(var);
    std::vector<T> out(raw.size());
    if (sd <= std::numeric_limits<double>::epsilon() * (1.0 + std::abs(mean))) {
        return out;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = static_cast<T>((static_cast<double>(raw[i]) - mean) / sd);
    }
    return out;
}

template <typename T>
std::vector<T> znormalize(const std::vector<T>& raw) {
    return znormalize(std::span<const T>(raw));
}

/// Piecewise aggregate approximation: mean of each of `w` equal-length segments.
/// `w` must divide the series length.
template <typename T>
std::vector<double> paa(std::span<const T> s, std::size_t w) {
    if (w == 0 || w > s.size()) throw InvalidArgument("paa: segment count must be in [1, n]");
    if (s.size() % w != 0) throw InvalidArgument("paa: segment count must divide the series length");
    const std::size_t len = s.size() / w;
    std::vector<double> out(w);
    for (std::size_t seg = 0; seg < w; ++seg) {
        double sum = 0.0;
        for (std::size_t i = seg * len; i < (seg + 1) * len; ++i) sum += static_cast<double>(s[i]);
        out[seg] = sum / static_cast<double>(len);
    }
    return out;
}

template <typename T>
std::vector<double> paa(const std::vector<T>& s, std::size_t w) {
    return paa(std::span<const T>(s), w);
}

/// Standard normal quantiles Phi^-1((i+1)/c) for i in [0, c-1). `c` must be a
/// power of two >= 2. Computed by bisection over erfc; exactly antisymmetric.
std::vector<double> gaussian_breakpoints(std::uint32_t c);

/// Cached breakpoint table for cardinality 2^bits.
const std::vector<double>& breakpoints_for_bits(int bits);

/// Closed value interval of an iSAX symbol. Edges may be infinite.
struct ValueRange {
    double lo;
    double hi;

    [[nodiscard]] double width() const { return hi - lo; }
    [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Symbol geometry at a fixed full bit depth `bits`.
class SaxAlphabet {
public:
    explicit SaxAlphabet(int bits);

    [[nodiscard]] int bits() const { return bits_; }
    [[nodiscard]] std::uint32_t cardinality() const { return 1u << bits_; }
    [[nodiscard]] const std::vector<double>& breakpoints() const { return *breakpoints_; }

    /// Value range covered by `code` at `depth` (depth 0 is the whole real line).
    [[nodiscard]] ValueRange range(std::uint32_t code, int depth) const;
    /// Same as range() with infinite edges truncated to +/- kValueDomain.
    [[nodiscard]] ValueRange finite_range(std::uint32_t code, int depth) const;
    [[nodiscard]] double midpoint(std::uint32_t code, int depth) const;

    /// Symbol (full depth) of a PAA coefficient: the number of breakpoints <= v.
    [[nodiscard]] std::uint8_t symbol(double v) const;

private:
    int bits_;
    const std::vector<double>* breakpoints_;
};

/// SAX word at full depth from PAA coefficients. A coefficient equal to a
/// breakpoint maps to the upper region.
std::vector<std::uint8_t> sax_from_paa(std::span<const double> paa, std::uint32_t c);

/// Variable-depth prefix of a SAX word. Depth 0 is the wildcard.
class IsaxWord {
public:
    IsaxWord() = default;
    /// All-wildcard word over `w` segments.
    IsaxWord(int w, int bits);
    IsaxWord(std::vector<std::uint8_t> codes, std::vector<std::uint8_t> depths, int bits);

    /// Full-depth word from a SAX word.
    static IsaxWord from_sax(std::span<const std::uint8_t> sax, int bits);

    [[nodiscard]] int segments() const { return static_cast<int>(codes_.size()); }
    [[nodiscard]] int bits() const { return bits_; }
    [[nodiscard]] std::uint8_t code(int seg) const { return codes_[seg]; }
    [[nodiscard]] std::uint8_t depth(int seg) const { return depths_[seg]; }
    [[nodiscard]] const std::vector<std::uint8_t>& codes() const { return codes_; }
    [[nodiscard]] const std::vector<std::uint8_t>& depths() const { return depths_; }

    /// True when every segment's code is a bit-prefix of the SAX symbol.
    [[nodiscard]] bool covers(std::span<const std::uint8_t> sax) const;
    [[nodiscard]] bool covers_segment(int seg, std::uint8_t symbol) const;

    /// Word of the child reached through `sid` when splitting on `csl`.
    [[nodiscard]] IsaxWord child(std::span<const std::uint8_t> csl, Sid sid) const;
    /// Refines only the chosen segments whose sid bit is not in `demoted_mask`.
    [[nodiscard]] IsaxWord child_demoted(std::span<const std::uint8_t> csl, Sid sid, Sid demoted_mask) const;

    bool operator==(const IsaxWord&) const = default;

private:
    std::vector<std::uint8_t> codes_;
    std::vector<std::uint8_t> depths_;
    int bits_ = 0;
};

/// The (depth+1)-th most significant bit of a full-depth symbol.
inline int next_bit(std::uint8_t symbol, int depth, int bits) {
    return (symbol >> (bits - depth - 1)) & 1;
}

/// Routing sid: one bit per chosen segment (ascending ids), the first chosen
/// segment being the most significant bit. Throws InternalError when a chosen
/// segment is already at full depth.
Sid promote_isax(const IsaxWord& node, std::span<const std::uint8_t> query_sax,
                 std::span<const std::uint8_t> csl);

/// As promote_isax, but the bit of `fixed_segment` is forced to `fixed_bit`.
Sid promote_isax_fixed(const IsaxWord& node, std::span<const std::uint8_t> query_sax,
                       std::span<const std::uint8_t> csl, int fixed_segment, int fixed_bit);

/// Bit position (from the least significant end) of chosen segment index `k`
/// inside a sid of length `lambda`.
inline int sid_bit_position(int k, int lambda) { return lambda - 1 - k; }

/// Summary of one series at the index configuration.
struct SeriesSummary {
    std::vector<double> paa;
    std::vector<std::uint8_t> sax;
};

template <typename T>
SeriesSummary summarize(std::span<const T> normalized, std::size_t w, std::uint32_t c) {
    SeriesSummary s;
    s.paa = paa(normalized, w);
    s.sax = sax_from_paa(s.paa, c);
    return s;
}

}  // namespace dumpy
