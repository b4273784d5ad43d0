#pragma once

// Adaptive node splitting: pick the chosen-segment list of an overfull node by
// maximizing a proximity (projected variance) plus compactness (fill-factor
// spread and overflow) objective.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "dumpy/sax_table.hpp"
#include "dumpy/series.hpp"

namespace dumpy {

/// Bit j set means segment j is chosen.
using SegmentMask = std::uint32_t;

std::vector<std::uint8_t> mask_to_csl(SegmentMask mask);
SegmentMask csl_to_mask(std::span<const std::uint8_t> csl);

struct SplitParams {
    std::size_t th = 10000;
    double alpha = 0.2;
    double fill_low = 0.5;
    double fill_high = 3.0;
    /// Restrict fanouts to the fill-factor window. When false every fanout in
    /// [1, #splittable] is scored (used to measure the window's effect).
    bool restrict_window = true;
};

/// Per-segment population variance of the rows' refined symbol midpoints.
struct SegmentStats {
    std::vector<double> variance;
    std::vector<bool> splittable;

    [[nodiscard]] int splittable_count() const;
    [[nodiscard]] SegmentMask splittable_mask() const;
    [[nodiscard]] double variance_sum(SegmentMask mask) const;
};

struct SplitPlan {
    std::vector<std::uint8_t> csl;
    std::vector<std::uint64_t> child_sizes;  // indexed by sid, 2^|csl| entries
    double variance_sum = 0.0;
    double overflow_ratio = 0.0;
    double fill_stddev = 0.0;
    double score = 0.0;

    [[nodiscard]] std::size_t lambda() const { return csl.size(); }
    [[nodiscard]] std::size_t fanout() const { return std::size_t{1} << csl.size(); }
};

struct LambdaRange {
    int min = 1;
    int max = 1;
};

/// Throws CannotSplit when every segment of `node` is at full depth.
SegmentStats segment_variances(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node);

/// Admissible chosen-segment counts keeping the average child fill factor in
/// [fill_low, fill_high]: ceil/floor of the log bounds, clamped to [1, w] and
/// widened so that min <= max.
LambdaRange lambda_range(std::uint64_t c_n, std::size_t th, double fill_low, double fill_high, int w);

/// Visits the child-size histogram of every plan over the splittable segments
/// with lambda in `range`. Histograms of the largest fanout are marginalized
/// from the rows' base codes; smaller plans are folded from a superset plan.
void for_each_plan_distribution(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node,
                                SegmentMask splittable, LambdaRange range,
                                const std::function<void(SegmentMask, std::span<const std::uint32_t>)>& visit);

std::map<SegmentMask, std::vector<std::uint64_t>> child_size_distributions(const SaxTable& table,
                                                                          std::span<const SeriesId> rows,
                                                                          const IsaxWord& node, LambdaRange range);

/// Fills overflow ratio and fill-factor spread from child sizes.
void fill_compactness(SplitPlan& plan, std::size_t th);

/// exp(sqrt(variance_sum / lambda)) + alpha * exp(-(1 + overflow) * fill_stddev)
double score_plan(const SplitPlan& plan, double alpha);

/// True when `a` beats `b`: higher score, then smaller fanout, then
/// lexicographically smaller csl.
bool plan_better(const SplitPlan& a, const SplitPlan& b);

/// Best-scoring plan over all admissible segment subsets.
SplitPlan choose_split_plan(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node,
                            const SplitParams& params);

/// Baseline binary split: one segment, the one with the largest variance.
SplitPlan choose_binary_split(const SaxTable& table, std::span<const SeriesId> rows, const IsaxWord& node,
                              const SplitParams& params);

/// Sid of a row under `csl` for a node (promote_isax over a table row).
inline Sid row_sid(const IsaxWord& node, std::span<const std::uint8_t> sax, std::span<const std::uint8_t> csl) {
    return promote_isax(node, sax, csl);
}

}  // namespace dumpy
