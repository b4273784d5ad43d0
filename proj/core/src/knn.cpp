#include "dumpy/knn.hpp"

#include <algorithm>
#include <cmath>

#include "dumpy/error.hpp"

namespace dumpy {

KnnHeap::KnnHeap(std::size_t k) : k_(k) {
    if (k == 0) throw InvalidArgument("k must be at least 1");
    heap_.reserve(std::min<std::size_t>(k, 1 << 16));
}

double KnnHeap::bound() const { return full() ? heap_.front().d_sq : kInf; }

bool KnnHeap::admits(double d_sq, SeriesId ordinal) const {
    if (!full()) return true;
    return Entry{d_sq, ordinal} < heap_.front();
}

bool KnnHeap::offer(double d_sq, SeriesId ordinal) {
    if (!admits(d_sq, ordinal) || members_.count(ordinal)) return false;
    if (full()) {
        members_.erase(heap_.front().ordinal);
        std::pop_heap(heap_.begin(), heap_.end());
        heap_.pop_back();
    }
    heap_.push_back({d_sq, ordinal});
    std::push_heap(heap_.begin(), heap_.end());
    members_.insert(ordinal);
    return true;
}

void KnnHeap::merge(const KnnHeap& other) {
    for (const auto& e : other.heap_) offer(e.d_sq, e.ordinal);
}

std::vector<Neighbor> KnnHeap::sorted() const {
    auto entries = heap_;
    std::sort(entries.begin(), entries.end());
    std::vector<Neighbor> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back({e.ordinal, std::sqrt(e.d_sq)});
    return out;
}

}  // namespace dumpy
