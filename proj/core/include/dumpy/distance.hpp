#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dumpy/series.hpp"

namespace dumpy {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Distance measure used by a query.
struct DistanceKind {
    enum class Kind { ED, DTW };

    Kind kind = Kind::ED;
    double window_ratio = 0.10;  // DTW only, in (0, 1]

    static DistanceKind ed() { return {}; }
    static DistanceKind dtw(double ratio = 0.10);

    [[nodiscard]] bool is_dtw() const { return kind == Kind::DTW; }
    /// Sakoe-Chiba half-width for series length n, rounded up.
    [[nodiscard]] std::size_t window(std::size_t n) const;

    bool operator==(const DistanceKind&) const = default;
};

/// Squared Euclidean distance with a fixed left-to-right summation order.
/// Returns a value > bound as soon as the running sum exceeds `bound`.
double ed_sq(std::span<const float> a, std::span<const float> b, double bound = kInf);
double ed(std::span<const float> a, std::span<const float> b);
double ed(std::span<const double> a, std::span<const double> b);

/// Squared banded DTW (squared pointwise cost, half-width `window`).
/// Abandons with +inf when every cell of a row exceeds `bound`.
double dtw_sq(std::span<const float> a, std::span<const float> b, std::size_t window, double bound = kInf);
double dtw(std::span<const float> a, std::span<const float> b, double window_ratio);
double dtw(std::span<const double> a, std::span<const double> b, double window_ratio);

/// Upper/lower envelope of a query over all warpings inside the band.
struct Envelope {
    std::vector<double> upper;
    std::vector<double> lower;
};

Envelope make_envelope(std::span<const float> q, std::size_t window);

/// LB_Keogh between an envelope and a candidate series (squared).
double lb_keogh_sq(const Envelope& env, std::span<const float> s, double bound = kInf);

/// Squared gap from `v` to [range.lo, range.hi] (0 inside).
inline double gap_sq(double v, const ValueRange& r) {
    if (v < r.lo) return (r.lo - v) * (r.lo - v);
    if (v > r.hi) return (v - r.hi) * (v - r.hi);
    return 0.0;
}

/// Squared iSAX lower bound of ED between a query (via its PAA) and any series
/// whose SAX word has `node` as prefix.
double lb_isax_ed_sq(std::span<const double> query_paa, const IsaxWord& node, const SaxAlphabet& alphabet,
                     std::size_t n);
double lb_isax_ed(std::span<const double> query_paa, const IsaxWord& node, std::size_t n);

/// Per-segment means of an envelope's upper and lower bounds.
struct EnvelopePaa {
    std::vector<double> upper;
    std::vector<double> lower;
};

EnvelopePaa envelope_paa(const Envelope& env, std::size_t w);

/// Squared iSAX lower bound of DTW: per segment, the gap between the envelope's
/// segment-mean interval and the node interval when they are disjoint.
double lb_isax_dtw_sq(const EnvelopePaa& env, const IsaxWord& node, const SaxAlphabet& alphabet, std::size_t n);
double lb_isax_dtw(std::span<const float> query, const IsaxWord& node, double window_ratio);

}  // namespace dumpy
