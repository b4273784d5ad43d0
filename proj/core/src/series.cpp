#include "dumpy/series.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <mutex>
#include <string>

namespace dumpy {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Bisection is slow but exact to the last few ulps; tables are computed once.
double normal_quantile(double p) {
    double lo = -40.0;
    double hi = 40.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void check_bits(int bits) {
    if (bits < 1 || bits > kMaxBits) {
        throw InvalidArgument("SAX bit depth must be in [1, " + std::to_string(kMaxBits) + "]");
    }
}

}  // namespace

std::vector<double> gaussian_breakpoints(std::uint32_t c) {
    if (c < 2 || !std::has_single_bit(c)) {
        throw InvalidArgument("gaussian_breakpoints: cardinality must be a power of two >= 2");
    }
    std::vector<double> bp(c - 1);
    const std::uint32_t half = c / 2;
    bp[half - 1] = 0.0;
    for (std::uint32_t i = 0; i + 1 < half; ++i) {
        const double q = normal_quantile(static_cast<double>(i + 1) / static_cast<double>(c));
        bp[i] = q;
        bp[c - 2 - i] = -q;
    }
    return bp;
}

const std::vector<double>& breakpoints_for_bits(int bits) {
    check_bits(bits);
    static std::array<std::vector<double>, kMaxBits + 1> tables;
    static std::array<std::once_flag, kMaxBits + 1> flags;
    std::call_once(flags[bits], [bits] { tables[bits] = gaussian_breakpoints(1u << bits); });
    return tables[bits];
}

SaxAlphabet::SaxAlphabet(int bits) : bits_(bits), breakpoints_(&breakpoints_for_bits(bits)) {}

ValueRange SaxAlphabet::range(std::uint32_t code, int depth) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (depth == 0) return {-inf, inf};
    const int shift = bits_ - depth;
    const std::uint32_t first = code << shift;
    const std::uint32_t last = ((code + 1) << shift) - 1;
    const auto& bp = *breakpoints_;
    const double lo = first == 0 ? -inf : bp[first - 1];
    const double hi = last + 1 >= cardinality() ? inf : bp[last];
    return {lo, hi};
}

ValueRange SaxAlphabet::finite_range(std::uint32_t code, int depth) const {
    ValueRange r = range(code, depth);
    r.lo = std::max(r.lo, -kValueDomain);
    r.hi = std::min(r.hi, kValueDomain);
    return r;
}

double SaxAlphabet::midpoint(std::uint32_t code, int depth) const {
    const ValueRange r = finite_range(code, depth);
    return 0.5 * (r.lo + r.hi);
}

std::uint8_t SaxAlphabet::symbol(double v) const {
    const auto& bp = *breakpoints_;
    return static_cast<std::uint8_t>(std::upper_bound(bp.begin(), bp.end(), v) - bp.begin());
}

std::vector<std::uint8_t> sax_from_paa(std::span<const double> paa, std::uint32_t c) {
    if (c < 2 || !std::has_single_bit(c)) {
        throw InvalidArgument("sax_from_paa: cardinality must be a power of two >= 2");
    }
    const SaxAlphabet alphabet(std::countr_zero(c));
    std::vector<std::uint8_t> out(paa.size());
    std::transform(paa.begin(), paa.end(), out.begin(), [&](double v) { return alphabet.symbol(v); });
    return out;
}

IsaxWord::IsaxWord(int w, int bits) : codes_(w, 0), depths_(w, 0), bits_(bits) { check_bits(bits); }

IsaxWord::IsaxWord(std::vector<std::uint8_t> codes, std::vector<std::uint8_t> depths, int bits)
    : codes_(std::move(codes)), depths_(std::move(depths)), bits_(bits) {
    check_bits(bits);
    if (codes_.size() != depths_.size()) throw InvalidArgument("IsaxWord: codes/depths size mismatch");
    for (std::size_t i = 0; i < codes_.size(); ++i) {
        if (depths_[i] > bits_ || (depths_[i] < 8 && (codes_[i] >> depths_[i]) != 0)) {
            throw InvalidArgument("IsaxWord: code does not fit its depth");
        }
    }
}

IsaxWord IsaxWord::from_sax(std::span<const std::uint8_t> sax, int bits) {
    return IsaxWord(std::vector<std::uint8_t>(sax.begin(), sax.end()),
                    std::vector<std::uint8_t>(sax.size(), static_cast<std::uint8_t>(bits)), bits);
}

bool IsaxWord::covers_segment(int seg, std::uint8_t symbol) const {
    const int d = depths_[seg];
    return d == 0 || (symbol >> (bits_ - d)) == codes_[seg];
}

bool IsaxWord::covers(std::span<const std::uint8_t> sax) const {
    for (int seg = 0; seg < segments(); ++seg) {
        if (!covers_segment(seg, sax[seg])) return false;
    }
    return true;
}

IsaxWord IsaxWord::child(std::span<const std::uint8_t> csl, Sid sid) const {
    return child_demoted(csl, sid, 0);
}

IsaxWord IsaxWord::child_demoted(std::span<const std::uint8_t> csl, Sid sid, Sid demoted_mask) const {
    IsaxWord out = *this;
    const int lambda = static_cast<int>(csl.size());
    for (int k = 0; k < lambda; ++k) {
        const int pos = sid_bit_position(k, lambda);
        if ((demoted_mask >> pos) & 1u) continue;
        const int seg = csl[k];
        if (out.depths_[seg] >= bits_) throw InternalError("IsaxWord::child: segment already at full depth");
        out.codes_[seg] = static_cast<std::uint8_t>((out.codes_[seg] << 1) | ((sid >> pos) & 1u));
        ++out.depths_[seg];
    }
    return out;
}

Sid promote_isax(const IsaxWord& node, std::span<const std::uint8_t> query_sax,
                 std::span<const std::uint8_t> csl) {
    return promote_isax_fixed(node, query_sax, csl, -1, 0);
}

Sid promote_isax_fixed(const IsaxWord& node, std::span<const std::uint8_t> query_sax,
                       std::span<const std::uint8_t> csl, int fixed_segment, int fixed_bit) {
    Sid sid = 0;
    for (std::uint8_t seg : csl) {
        const int depth = node.depth(seg);
        if (depth >= node.bits()) throw InternalError("promote_isax: chosen segment already at full depth");
        const int bit = seg == fixed_segment ? (fixed_bit & 1) : next_bit(query_sax[seg], depth, node.bits());
        sid = (sid << 1) | static_cast<Sid>(bit);
    }
    return sid;
}

}  // namespace dumpy
