#pragma once

// Independent reference implementations for split-plan checks: interval
// midpoints from boost's normal quantile, child sizes by direct recount, and
// exhaustive enumeration of every admissible chosen-segment subset.

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <vector>

#include "dumpy/split.hpp"

namespace dumpy::testing {

inline double oracle_midpoint(std::uint32_t code, int depth) {
    static const boost::math::normal_distribution<double> nd;
    const double cells = std::ldexp(1.0, depth);
    const double lo = code == 0 ? -kValueDomain : boost::math::quantile(nd, code / cells);
    const double hi = code + 1 == cells ? kValueDomain : boost::math::quantile(nd, (code + 1) / cells);
    return 0.5 * (std::max(lo, -kValueDomain) + std::min(hi, kValueDomain));
}

inline std::vector<int> oracle_segments(std::uint32_t mask) {
    std::vector<int> out;
    for (int j = 0; j < 32; ++j)
        if (mask >> j & 1u) out.push_back(j);
    return out;
}

/// Variance of the rows projected on the chosen segments' refined midpoints:
/// mean squared distance to the centroid.
inline double oracle_projected_variance(const SaxTable& t, std::span<const SeriesId> rows, const IsaxWord& node,
                                        std::uint32_t mask) {
    const auto segs = oracle_segments(mask);
    std::vector<std::vector<double>> pts;
    for (auto r : rows) {
        std::vector<double> p;
        for (int s : segs) {
            const int d = node.depth(s) + 1;
            p.push_back(oracle_midpoint(t.row(r)[s] >> (t.bits() - d), d));
        }
        pts.push_back(p);
    }
    std::vector<double> c(segs.size(), 0.0);
    for (auto& p : pts)
        for (std::size_t i = 0; i < p.size(); ++i) c[i] += p[i];
    for (auto& v : c) v /= pts.size();
    double sum = 0;
    for (auto& p : pts)
        for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] - c[i]) * (p[i] - c[i]);
    return sum / pts.size();
}

inline std::vector<std::uint64_t> oracle_child_sizes(const SaxTable& t, std::span<const SeriesId> rows,
                                                    const IsaxWord& node, std::uint32_t mask) {
    const auto segs = oracle_segments(mask);
    std::vector<std::uint64_t> sizes(std::size_t{1} << segs.size(), 0);
    for (auto r : rows) {
        std::size_t sid = 0;
        for (int s : segs) {
            const int d = node.depth(s);
            sid = sid * 2 + ((t.row(r)[s] >> (t.bits() - d - 1)) & 1u);
        }
        ++sizes[sid];
    }
    return sizes;
}

struct OraclePlan {
    std::uint32_t mask = 0;
    double score = -1;
};

inline double oracle_score(double var, int lambda, const std::vector<std::uint64_t>& sizes, std::size_t th,
                           double alpha) {
    double mean = 0;
    int over = 0;
    for (auto s : sizes) {
        mean += double(s) / th;
        over += s > th;
    }
    mean /= sizes.size();
    double v = 0;
    for (auto s : sizes) v += (double(s) / th - mean) * (double(s) / th - mean);
    const double sigma = std::sqrt(v / sizes.size());
    const double o = double(over) / sizes.size();
    return std::exp(std::sqrt(var / lambda)) + alpha * std::exp(-(1 + o) * sigma);
}

/// Enumerates every subset of splittable segments with size in [lo, hi].
inline OraclePlan oracle_best_plan(const SaxTable& t, std::span<const SeriesId> rows, const IsaxWord& node,
                                   int lo, int hi, std::size_t th, double alpha) {
    const int w = t.segments();
    OraclePlan best;
    std::vector<int> best_csl;
    for (std::uint32_t mask = 1; mask < (1u << w); ++mask) {
        const int lam = std::popcount(mask);
        if (lam < lo || lam > hi) continue;
        bool ok = true;
        for (int s : oracle_segments(mask)) ok &= node.depth(s) < t.bits();
        if (!ok) continue;
        const double score =
            oracle_score(oracle_projected_variance(t, rows, node, mask), lam, oracle_child_sizes(t, rows, node, mask),
                         th, alpha);
        const auto csl = oracle_segments(mask);
        const double tol = 1e-12 * std::max(std::abs(score), std::abs(best.score));
        bool take = best.mask == 0 || score > best.score + tol;
        if (!take && std::abs(score - best.score) <= tol) {
            take = csl.size() < best_csl.size() || (csl.size() == best_csl.size() && csl < best_csl);
        }
        if (take) {
            best = {mask, score};
            best_csl = csl;
        }
    }
    return best;
}

/// A random overfull node: a random iSAX prefix over w segments and `count`
/// rows under it. Per-segment spread varies so that variances differ.
struct SyntheticNode {
    SaxTable table;
    IsaxWord node;
    std::vector<SeriesId> rows;
};

inline SyntheticNode make_synthetic_node(int w, int bits, std::size_t count, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> depth_dist(0, bits - 1);
    std::uniform_real_distribution<double> spread(0.05, 1.5);
    std::normal_distribution<double> nd;
    const SaxAlphabet alphabet(bits);
    std::vector<std::uint8_t> codes(w), depths(w);
    std::vector<double> sd(w), centre(w);
    for (int j = 0; j < w; ++j) {
        depths[j] = static_cast<std::uint8_t>(std::min(depth_dist(rng), 3));
        sd[j] = spread(rng);
        centre[j] = nd(rng) * 0.5;
    }
    // anchor the prefix on one random point so that it is reachable
    std::vector<std::uint8_t> anchor(w);
    for (int j = 0; j < w; ++j) {
        anchor[j] = alphabet.symbol(centre[j]);
        codes[j] = static_cast<std::uint8_t>(anchor[j] >> (bits - depths[j]));
    }
    IsaxWord node(codes, depths, bits);
    std::vector<std::uint8_t> symbols;
    std::size_t made = 0;
    while (made < count) {
        std::vector<std::uint8_t> row(w);
        for (int j = 0; j < w; ++j) {
            auto sym = alphabet.symbol(centre[j] + sd[j] * nd(rng));
            // pull the symbol into the prefix region
            const int shift = bits - depths[j];
            if (depths[j] > 0 && (sym >> shift) != codes[j]) {
                sym = static_cast<std::uint8_t>((codes[j] << shift) | (sym & ((1u << shift) - 1)));
            }
            row[j] = sym;
        }
        symbols.insert(symbols.end(), row.begin(), row.end());
        ++made;
    }
    SyntheticNode out{SaxTable(w, bits, std::move(symbols)), node, {}};
    out.rows.resize(count);
    for (std::size_t i = 0; i < count; ++i) out.rows[i] = i;
    return out;
}

}  // namespace dumpy::testing
