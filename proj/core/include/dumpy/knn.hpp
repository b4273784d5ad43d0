#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "dumpy/distance.hpp"
#include "dumpy/series.hpp"

namespace dumpy {

struct Neighbor {
    SeriesId ordinal = 0;
    double distance = 0.0;  // not squared

    bool operator==(const Neighbor&) const = default;
};

/// Bounded max-heap of the k best (squared distance, ordinal) pairs. Ties on
/// distance go to the smaller ordinal. An ordinal is kept at most once.
class KnnHeap {
public:
    explicit KnnHeap(std::size_t k);

    [[nodiscard]] std::size_t k() const { return k_; }
    [[nodiscard]] std::size_t size() const { return heap_.size(); }
    [[nodiscard]] bool full() const { return heap_.size() >= k_; }
    /// Squared distance of the current k-th entry, +inf until full.
    [[nodiscard]] double bound() const;
    /// True when (d_sq, ordinal) would enter the heap.
    [[nodiscard]] bool admits(double d_sq, SeriesId ordinal) const;
    /// Offers a candidate; returns true when it was kept.
    bool offer(double d_sq, SeriesId ordinal);
    void merge(const KnnHeap& other);

    /// Ascending by (distance, ordinal), distances square-rooted.
    [[nodiscard]] std::vector<Neighbor> sorted() const;

private:
    struct Entry {
        double d_sq;
        SeriesId ordinal;
        bool operator<(const Entry& o) const { return d_sq < o.d_sq || (d_sq == o.d_sq && ordinal < o.ordinal); }
    };
    std::size_t k_;
    std::vector<Entry> heap_;  // max-heap under Entry::operator<
    std::unordered_set<SeriesId> members_;
};

}  // namespace dumpy
