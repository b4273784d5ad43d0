#pragma once

// Full-scan kNN by sorting every distance; no bounds, no abandoning.

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "dumpy/distance.hpp"
#include "dumpy/knn.hpp"

namespace dumpy::testing {

inline std::vector<Neighbor> oracle_knn(const std::vector<std::vector<float>>& data, std::span<const float> query,
                                        std::size_t k, DistanceKind dist,
                                        const std::vector<SeriesId>* subset = nullptr) {
    std::vector<std::pair<double, SeriesId>> all;
    auto add = [&](SeriesId i) {
        const double d = dist.is_dtw() ? dtw_sq(query, data[i], dist.window(query.size())) : ed_sq(query, data[i]);
        all.emplace_back(d, i);
    };
    if (subset) {
        for (SeriesId i : *subset) add(i);
    } else {
        for (SeriesId i = 0; i < data.size(); ++i) add(i);
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::vector<Neighbor> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back({all[i].second, std::sqrt(all[i].first)});
    return out;
}

}  // namespace dumpy::testing
