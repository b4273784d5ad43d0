#include "dumpy/split.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

namespace dumpy {

namespace {

// Scores closer than this (relative) are treated as ties so that plans which
// are mathematically equal do not flip on summation-order rounding.
constexpr double kScoreTieEps = 1e-12;

std::vector<int> mask_segments(SegmentMask mask) {
    std::vector<int> out;
    while (mask) {
        out.push_back(std::countr_zero(mask));
        mask &= mask - 1;
    }
    return out;
}

// All masks with `k` segments drawn from `segs`, in lexicographic csl order.
void combinations(const std::vector<int>& segs, int k, std::size_t start, SegmentMask acc,
                  std::vector<SegmentMask>& out) {
    if (k == 0) {
        out.push_back(acc);
        return;
    }
    for (std::size_t i = start; i + k <= segs.size(); ++i) {
        combinations(segs, k - 1, i + 1, acc | (SegmentMask{1} << segs[i]), out);
    }
}

// Extracts the bits of `code` selected by `positions` (MSB-first order) into a
// dense index.
inline std::uint32_t gather(std::uint32_t code, const std::vector<int>& positions) {
    std::uint32_t idx = 0;
    for (int p : positions) idx = (idx << 1) | ((code >> p) & 1u);
    return idx;
}

// Removes bit `p` from every index of `hist`, summing collapsed pairs.
std::vector<std::uint32_t> fold_bit(const std::vector<std::uint32_t>& hist, int p) {
    std::vector<std::uint32_t> out(hist.size() / 2, 0);
    const std::uint32_t low = (1u << p) - 1;
    for (std::uint32_t i = 0; i < hist.size(); ++i) {
        out[((i >> (p + 1)) << p) | (i & low)] += hist[i];
    }
    return out;
}

void check_rows(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node) {
    if (rows.empty()) throw InvalidArgument("split: node has no rows");
    if (node.segments() != table.segments() || node.bits() != table.bits()) {
        throw InvalidArgument("split: node word does not match the SAX table shape");
    }
}

}  // namespace

std::vector<std::uint8_t> mask_to_csl(SegmentMask mask) {
    std::vector<std::uint8_t> csl;
    for (int s : mask_segments(mask)) csl.push_back(static_cast<std::uint8_t>(s));
    return csl;
}

SegmentMask csl_to_mask(std::span<const std::uint8_t> csl) {
    SegmentMask m = 0;
    for (auto s : csl) m |= SegmentMask{1} << s;
    return m;
}

int SegmentStats::splittable_count() const {
    return static_cast<int>(std::count(splittable.begin(), splittable.end(), true));
}

SegmentMask SegmentStats::splittable_mask() const {
    SegmentMask m = 0;
    for (std::size_t j = 0; j < splittable.size(); ++j) {
        if (splittable[j]) m |= SegmentMask{1} << j;
    }
    return m;
}

double SegmentStats::variance_sum(SegmentMask mask) const {
    double sum = 0.0;
    for (int s : mask_segments(mask)) sum += variance[s];
    return sum;
}

SegmentStats segment_variances(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node) {
    check_rows(table, rows, node);
    const int w = table.segments();
    const int bits = table.bits();
    const SaxAlphabet alphabet(bits);
    SegmentStats st;
    st.variance.assign(w, 0.0);
    st.splittable.assign(w, false);
    for (int j = 0; j < w; ++j) {
        const int depth = node.depth(j) + 1;
        if (depth > bits) continue;
        st.splittable[j] = true;
        std::vector<double> mid(std::size_t{1} << depth);
        for (std::uint32_t c = 0; c < mid.size(); ++c) mid[c] = alphabet.midpoint(c, depth);
        const int shift = bits - depth;
        double mean = 0.0;
        for (SeriesId r : rows) mean += mid[table.row(r)[j] >> shift];
        mean /= static_cast<double>(rows.size());
        double var = 0.0;
        for (SeriesId r : rows) {
            const double d = mid[table.row(r)[j] >> shift] - mean;
            var += d * d;
        }
        st.variance[j] = var / static_cast<double>(rows.size());
    }
    if (st.splittable_count() == 0) throw CannotSplit("split: every segment is at full depth");
    return st;
}

LambdaRange lambda_range(std::uint64_t c_n, std::size_t th, double fill_low, double fill_high, int w) {
    if (th == 0 || fill_low <= 0.0 || fill_high < fill_low) throw InvalidArgument("lambda_range: bad fill bounds");
    const double cn = static_cast<double>(c_n);
    const double t = static_cast<double>(th);
    LambdaRange r;
    r.min = std::max(1, static_cast<int>(std::ceil(std::log2(cn / (fill_high * t)))));
    r.max = std::min(w, static_cast<int>(std::floor(std::log2(cn / (fill_low * t)))));
    r.min = std::min(r.min, w);
    r.max = std::max(r.max, r.min);
    return r;
}

void for_each_plan_distribution(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node,
                                SegmentMask splittable, LambdaRange range,
                                const std::function<void(SegmentMask, std::span<const std::uint32_t>)>& visit) {
    check_rows(table, rows, node);
    const auto segs = mask_segments(splittable);
    const int m = static_cast<int>(segs.size());
    if (m == 0) throw CannotSplit("split: no splittable segment");
    range.max = std::min(range.max, m);
    range.min = std::clamp(range.min, 1, range.max);
    const int bits = node.bits();

    // Base codes: one bit per splittable segment, lowest segment most significant.
    std::unordered_map<std::uint32_t, std::uint32_t> base;
    base.reserve(rows.size());
    for (SeriesId r : rows) {
        const auto sax = table.row(r);
        std::uint32_t code = 0;
        for (int s : segs) code = (code << 1) | static_cast<std::uint32_t>(next_bit(sax[s], node.depth(s), bits));
        ++base[code];
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> sparse(base.begin(), base.end());
    std::sort(sparse.begin(), sparse.end());

    std::vector<int> seg_rank(kMaxSegments + 1, -1);
    for (int i = 0; i < m; ++i) seg_rank[segs[i]] = i;

    std::unordered_map<SegmentMask, std::vector<std::uint32_t>> level;
    {
        std::vector<SegmentMask> masks;
        combinations(segs, range.max, 0, 0, masks);
        for (SegmentMask mask : masks) {
            std::vector<int> positions;
            for (int s : mask_segments(mask)) positions.push_back(m - 1 - seg_rank[s]);
            std::vector<std::uint32_t> hist(std::size_t{1} << range.max, 0);
            for (const auto& [code, count] : sparse) hist[gather(code, positions)] += count;
            visit(mask, hist);
            level.emplace(mask, std::move(hist));
        }
    }
    for (int lam = range.max - 1; lam >= range.min; --lam) {
        std::vector<SegmentMask> masks;
        combinations(segs, lam, 0, 0, masks);
        std::unordered_map<SegmentMask, std::vector<std::uint32_t>> next;
        next.reserve(masks.size());
        for (SegmentMask mask : masks) {
            const SegmentMask free = splittable & ~mask;
            const int add = std::countr_zero(free);
            const SegmentMask parent = mask | (SegmentMask{1} << add);
            const int k = std::popcount(parent & ((SegmentMask{1} << add) - 1));
            auto hist = fold_bit(level.at(parent), sid_bit_position(k, lam + 1));
            visit(mask, hist);
            next.emplace(mask, std::move(hist));
        }
        level = std::move(next);
    }
}

std::map<SegmentMask, std::vector<std::uint64_t>> child_size_distributions(const SaxTable& table,
                                                                          std::span<const SeriesId> rows,
                                                                          const IsaxWord& node, LambdaRange range) {
    const auto stats = segment_variances(table, rows, node);
    std::map<SegmentMask, std::vector<std::uint64_t>> out;
    for_each_plan_distribution(table, rows, node, stats.splittable_mask(), range,
                               [&](SegmentMask mask, std::span<const std::uint32_t> hist) {
                                   out[mask].assign(hist.begin(), hist.end());
                               });
    return out;
}

void fill_compactness(SplitPlan& plan, std::size_t th) {
    const auto& sizes = plan.child_sizes;
    const double fanout = static_cast<double>(sizes.size());
    const double t = static_cast<double>(th);
    double mean = 0.0;
    std::size_t over = 0;
    for (auto s : sizes) {
        mean += static_cast<double>(s) / t;
        if (s > th) ++over;
    }
    mean /= fanout;
    double var = 0.0;
    for (auto s : sizes) {
        const double d = static_cast<double>(s) / t - mean;
        var += d * d;
    }
    plan.fill_stddev = std::sqrt(var / fanout);
    plan.overflow_ratio = static_cast<double>(over) / fanout;
}

double score_plan(const SplitPlan& plan, double alpha) {
    if (plan.csl.empty()) throw InvalidArgument("score_plan: empty chosen-segment list");
    const double lam = static_cast<double>(plan.csl.size());
    return std::exp(std::sqrt(plan.variance_sum / lam)) +
           alpha * std::exp(-(1.0 + plan.overflow_ratio) * plan.fill_stddev);
}

bool plan_better(const SplitPlan& a, const SplitPlan& b) {
    const double tol = kScoreTieEps * std::max(std::abs(a.score), std::abs(b.score));
    if (a.score > b.score + tol) return true;
    if (b.score > a.score + tol) return false;
    if (a.csl.size() != b.csl.size()) return a.csl.size() < b.csl.size();
    return a.csl < b.csl;
}

SplitPlan choose_split_plan(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node,
                            const SplitParams& params) {
    const auto stats = segment_variances(table, rows, node);
    const int m = stats.splittable_count();
    LambdaRange range{1, m};
    if (params.restrict_window) {
        range = lambda_range(rows.size(), params.th, params.fill_low, params.fill_high, table.segments());
    }
    SplitPlan best;
    bool have = false;
    for_each_plan_distribution(table, rows, node, stats.splittable_mask(), range,
                               [&](SegmentMask mask, std::span<const std::uint32_t> hist) {
                                   SplitPlan p;
                                   p.csl = mask_to_csl(mask);
                                   p.child_sizes.assign(hist.begin(), hist.end());
                                   p.variance_sum = stats.variance_sum(mask);
                                   fill_compactness(p, params.th);
                                   p.score = score_plan(p, params.alpha);
                                   if (!have || plan_better(p, best)) {
                                       best = std::move(p);
                                       have = true;
                                   }
                               });
    return best;
}

SplitPlan choose_binary_split(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node,
                              const SplitParams& params) {
    const auto stats = segment_variances(table, rows, node);
    int pick = -1;
    for (int j = 0; j < table.segments(); ++j) {
        if (!stats.splittable[j]) continue;
        if (pick < 0 || stats.variance[j] > stats.variance[pick]) pick = j;
    }
    SplitPlan p;
    p.csl = {static_cast<std::uint8_t>(pick)};
    p.child_sizes.assign(2, 0);
    for (SeriesId r : rows) ++p.child_sizes[next_bit(table.row(r)[pick], node.depth(pick), table.bits())];
    p.variance_sum = stats.variance[pick];
    fill_compactness(p, params.th);
    p.score = score_plan(p, params.alpha);
    return p;
}

}  // namespace dumpy
