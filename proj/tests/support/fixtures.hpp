#pragma once

#include <random>
#include <vector>

#include "dumpy/config.hpp"
#include "dumpy/dataset.hpp"

namespace dumpy::testing {

inline IndexConfig small_config(std::size_t n = 64, int w = 8, std::size_t th = 100) {
    IndexConfig cfg;
    cfg.n = n;
    cfg.w = w;
    cfg.bits = 8;
    cfg.th = th;
    return cfg;
}

inline std::vector<float> random_walk(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> step(0.0, 1.0);
    std::vector<float> s(n);
    double x = 0;
    for (auto& v : s) {
        x += step(rng);
        v = static_cast<float>(x);
    }
    return s;
}

inline std::vector<SeriesId> iota_ids(std::uint64_t count) {
    std::vector<SeriesId> ids(count);
    for (SeriesId i = 0; i < count; ++i) ids[i] = i;
    return ids;
}

}  // namespace dumpy::testing
