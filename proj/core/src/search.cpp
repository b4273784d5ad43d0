#include "dumpy/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <queue>
#include <unordered_set>

#include "dumpy/error.hpp"
#include "dumpy/thread_pool.hpp"

namespace dumpy {

SearchCounters& SearchCounters::operator+=(const SearchCounters& o) {
    packs_visited += o.packs_visited;
    series_scanned += o.series_scanned;
    bytes_read += o.bytes_read;
    lb_computations += o.lb_computations;
    distance_computations += o.distance_computations;
    packs_pruned += o.packs_pruned;
    return *this;
}

PreparedQuery::PreparedQuery(const Index& ix, std::span<const float> series, DistanceKind dist, bool normalize)
    : PreparedQuery(series, ix.config().w, ix.config().bits, dist, normalize) {
    if (series.size() != ix.config().n) throw InvalidArgument("query length does not match the index");
}

PreparedQuery::PreparedQuery(std::span<const float> series, int w, int bits, DistanceKind dist, bool normalize)
    : alphabet_(bits), n_(series.size()), dist_(dist) {
    if (n_ == 0 || w <= 0 || n_ % static_cast<std::size_t>(w) != 0) {
        throw InvalidArgument("query length must be a positive multiple of the segment count");
    }
    values_.assign(series.begin(), series.end());
    if (normalize) normalize_into(series, values_);
    paa_ = dumpy::paa(std::span<const float>(values_), static_cast<std::size_t>(w));
    sax_ = sax_from_paa(paa_, alphabet_.cardinality());
    if (dist_.is_dtw()) {
        window_ = dist_.window(n_);
        env_ = make_envelope(values_, window_);
        env_paa_ = envelope_paa(env_, static_cast<std::size_t>(w));
    }
}

double PreparedQuery::lower_bound_sq(const IsaxWord& word) const {
    return dist_.is_dtw() ? lb_isax_dtw_sq(env_paa_, word, alphabet_, n_) : lb_isax_ed_sq(paa_, word, alphabet_, n_);
}

double PreparedQuery::distance_sq(std::span<const float> s, double bound_sq, SearchCounters& c) const {
    if (!dist_.is_dtw()) {
        ++c.distance_computations;
        return ed_sq(values_, s, bound_sq);
    }
    if (lb_keogh_sq(env_, s, bound_sq) > bound_sq) return kInf;
    ++c.distance_computations;
    return dtw_sq(values_, s, window_, bound_sq);
}

namespace {

using Bound = std::pair<double, NodeId>;  // (squared lb, node)
using MinQueue = std::priority_queue<Bound, std::vector<Bound>, std::greater<>>;

std::size_t record_bytes(const Index& ix) { return ix.layout().bytes(); }

void scan_data(const Index& ix, const PreparedQuery& q, NodeId id, const PackData& data, KnnHeap& heap,
               double outer_bound, SearchCounters& c) {
    const Node& p = ix.node(id);
    ++c.packs_visited;
    c.bytes_read += p.used() * record_bytes(ix);
    for (std::size_t i = 0; i < data.count(); ++i) {
        if (p.deleted[i]) continue;
        ++c.series_scanned;
        const double bound = std::min(heap.bound(), outer_bound);
        const double d = q.distance_sq(data.series(i), bound, c);
        if (d <= bound) heap.offer(d, data.ordinals[i]);
    }
}

void scan(const Index& ix, const PreparedQuery& q, NodeId id, KnnHeap& heap, QueryResult& r) {
    scan_data(ix, q, id, ix.read_pack(id), heap, kInf, r.counters);
    r.visited.push_back(id);
}

// Child of an internal node that the query routes to; when the sid has no
// child, the child with the smallest lower bound.
NodeId route_child(const Index& ix, const Node& n, const PreparedQuery& q, Sid sid, SearchCounters& c) {
    const NodeId child = n.child(sid);
    if (child != kNoNode) return child;
    NodeId best = kNoNode;
    double best_lb = kInf;
    for (NodeId ch : n.children) {
        const double lb = q.lower_bound_sq(ix.node(ch).isax);
        ++c.lb_computations;
        if (best == kNoNode || lb < best_lb) {
            best = ch;
            best_lb = lb;
        }
    }
    return best;
}

NodeId route_leaf(const Index& ix, const PreparedQuery& q, SearchCounters& c) {
    NodeId id = kRootId;
    while (id != kNoNode && ix.node(id).is_internal()) {
        const Node& n = ix.node(id);
        id = route_child(ix, n, q, promote_isax(n.isax, q.sax(), n.csl), c);
    }
    return id;
}

void finish(QueryResult& r, const KnnHeap& heap) {
    r.neighbors = heap.sorted();
    r.incomplete = r.neighbors.size() < heap.k();
}

// Packs below `id`, ordered by (lower bound, id).
std::vector<NodeId> packs_by_bound(const Index& ix, const PreparedQuery& q, NodeId id, SearchCounters& c) {
    std::vector<Bound> found;
    std::vector<NodeId> stack{id};
    while (!stack.empty()) {
        const NodeId cur = stack.back();
        stack.pop_back();
        const Node& n = ix.node(cur);
        if (n.is_pack()) {
            found.emplace_back(q.lower_bound_sq(n.isax), cur);
            ++c.lb_computations;
        } else {
            for (NodeId ch : n.children) stack.push_back(ch);
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<NodeId> out;
    out.reserve(found.size());
    for (const auto& [lb, p] : found) out.push_back(p);
    return out;
}

// Extended search body: descend while the subtree holds more than `nbr`
// packs, then visit the stopping node's subtree and its siblings' subtrees by
// lower bound, scanning at most `budget` packs not in `skip`.
void extended_visit(const Index& ix, const PreparedQuery& q, std::size_t nbr, std::size_t budget,
                    std::unordered_set<NodeId>& skip, KnnHeap& heap, QueryResult& r) {
    NodeId stop = kRootId;
    while (ix.node(stop).is_internal() && ix.node(stop).leaf_count > nbr) {
        const Node& n = ix.node(stop);
        const NodeId next = route_child(ix, n, q, promote_isax(n.isax, q.sax(), n.csl), r.counters);
        if (next == kNoNode) break;
        stop = next;
    }
    std::vector<NodeId> order;
    if (stop == kRootId) {
        order.push_back(kRootId);
    } else {
        order.push_back(stop);
        std::vector<Bound> sib;
        for (NodeId ch : ix.node(ix.node(stop).parent).children) {
            if (ch == stop) continue;
            sib.emplace_back(q.lower_bound_sq(ix.node(ch).isax), ch);
            ++r.counters.lb_computations;
        }
        std::sort(sib.begin(), sib.end());
        for (const auto& [lb, id] : sib) order.push_back(id);
    }
    std::size_t spent = 0;
    for (NodeId top : order) {
        if (spent >= budget) break;
        for (NodeId p : packs_by_bound(ix, q, top, r.counters)) {
            if (spent >= budget) break;
            if (!skip.insert(p).second) continue;
            scan(ix, q, p, heap, r);
            ++spent;
        }
    }
}

void check_k(std::size_t k) {
    if (k == 0) throw InvalidArgument("k must be at least 1");
}

}  // namespace

QueryResult approx_search(const Index& ix, const PreparedQuery& q, std::size_t k) {
    check_k(k);
    QueryResult r;
    KnnHeap heap(k);
    const NodeId leaf = route_leaf(ix, q, r.counters);
    if (leaf != kNoNode) scan(ix, q, leaf, heap, r);
    finish(r, heap);
    return r;
}

QueryResult extended_approx_search(const Index& ix, const PreparedQuery& q, std::size_t k, std::size_t nbr) {
    check_k(k);
    if (nbr == 0) throw InvalidArgument("nbr must be at least 1");
    QueryResult r;
    KnnHeap heap(k);
    std::unordered_set<NodeId> skip;
    extended_visit(ix, q, nbr, nbr, skip, heap, r);
    finish(r, heap);
    return r;
}

NodeId adapted_routing(const Index& ix, NodeId fuzzy_node, const PreparedQuery& q) {
    const Node& start = ix.node(fuzzy_node);
    if (!start.is_internal()) throw InvalidArgument("adapted_routing: node is not internal");
    int seg = -1;
    for (int s = 0; s < start.isax.segments(); ++s) {
        if (!start.isax.covers_segment(s, q.sax()[s])) {
            seg = s;
            break;
        }
    }
    if (seg < 0) throw InternalError("adapted_routing: the query lies inside the node on every segment");
    const int bit = 1 - (start.isax.code(seg) & 1);
    SearchCounters unused;
    NodeId id = fuzzy_node;
    while (id != kNoNode && ix.node(id).is_internal()) {
        const Node& n = ix.node(id);
        id = route_child(ix, n, q, promote_isax_fixed(n.isax, q.sax(), n.csl, seg, bit), unused);
    }
    return id;
}

QueryResult dumpyos_f_search(const Index& ix, const PreparedQuery& q, std::size_t k, std::size_t nbr, double f) {
    check_k(k);
    if (nbr == 0) throw InvalidArgument("nbr must be at least 1");
    if (f < 0.0) throw InvalidArgument("fuzzy fraction must be non-negative");
    QueryResult r;
    KnnHeap heap(k);
    const SaxAlphabet& alphabet = ix.alphabet();
    std::map<NodeId, double> fuzzy;  // node -> smallest estimated distance
    NodeId id = kRootId;
    while (ix.node(id).is_internal()) {
        const Node& n = ix.node(id);
        const Sid sid = promote_isax(n.isax, q.sax(), n.csl);
        const NodeId next = route_child(ix, n, q, sid, r.counters);
        const int lambda = static_cast<int>(n.csl.size());
        for (int kk = 0; kk < lambda; ++kk) {
            const int seg = n.csl[kk];
            const int pos = sid_bit_position(kk, lambda);
            const int depth = n.isax.depth(seg) + 1;
            const std::uint32_t lower = static_cast<std::uint32_t>(n.isax.code(seg)) << 1;
            const double bp = alphabet.range(lower, depth).hi;
            const std::uint32_t own = lower | ((sid >> pos) & 1u);
            const double width = alphabet.finite_range(own, depth).width();
            const double es = std::abs(q.paa()[seg] - bp);
            if (!(es < f * width)) continue;
            const NodeId sib = n.child(sid ^ (Sid{1} << pos));
            if (sib == kNoNode || sib == next) continue;
            auto [it, fresh] = fuzzy.emplace(sib, es);
            if (!fresh) it->second = std::min(it->second, es);
        }
        if (next == kNoNode) break;
        id = next;
    }
    std::unordered_set<NodeId> visited;
    if (ix.node(id).is_pack()) {
        scan(ix, q, id, heap, r);
        visited.insert(id);
    }
    std::vector<Bound> order;
    for (const auto& [node, es] : fuzzy) order.emplace_back(es, node);
    std::sort(order.begin(), order.end());
    std::size_t remaining = nbr;
    for (const auto& [es, node] : order) {
        if (remaining <= 1) break;
        const NodeId leaf = ix.node(node).is_internal() ? adapted_routing(ix, node, q) : node;
        if (leaf == kNoNode || !visited.insert(leaf).second) continue;
        scan(ix, q, leaf, heap, r);
        --remaining;
    }
    extended_visit(ix, q, remaining, remaining - 1, visited, heap, r);
    finish(r, heap);
    return r;
}

QueryResult exact_search(const Index& ix, const PreparedQuery& q, std::size_t k) {
    check_k(k);
    QueryResult r;
    KnnHeap heap(k);
    std::unordered_set<NodeId> visited;
    const NodeId seed = route_leaf(ix, q, r.counters);
    if (seed != kNoNode) {
        scan(ix, q, seed, heap, r);
        visited.insert(seed);
    }
    MinQueue queue;
    queue.emplace(0.0, kRootId);
    while (!queue.empty()) {
        const auto [lb, id] = queue.top();
        queue.pop();
        if (lb > heap.bound()) {
            r.pruned.emplace_back(id, lb);
            while (!queue.empty()) {
                r.pruned.push_back({queue.top().second, queue.top().first});
                queue.pop();
            }
            break;
        }
        const Node& n = ix.node(id);
        if (n.is_pack()) {
            if (visited.insert(id).second) scan(ix, q, id, heap, r);
            continue;
        }
        for (NodeId ch : n.children) {
            const double clb = q.lower_bound_sq(ix.node(ch).isax);
            ++r.counters.lb_computations;
            if (clb > heap.bound()) r.pruned.emplace_back(ch, clb);
            else queue.emplace(clb, ch);
        }
    }
    for (const auto& [node, lb] : r.pruned) r.counters.packs_pruned += ix.node(node).leaf_count;
    finish(r, heap);
    return r;
}

QueryResult parallel_exact_search(const Index& ix, const PreparedQuery& q, std::size_t k,
                                  const ParallelSearchOptions& opts) {
    check_k(k);
    if (opts.eta == 0) throw InvalidArgument("eta must be at least 1");
    if (opts.workers == 0) throw InvalidArgument("workers must be at least 1");
    QueryResult r;
    KnnHeap heap(k);
    std::unordered_set<NodeId> visited;
    const NodeId seed = route_leaf(ix, q, r.counters);
    if (seed != kNoNode) {
        scan(ix, q, seed, heap, r);
        visited.insert(seed);
    }

    MinQueue queue;
    queue.emplace(0.0, kRootId);
    bool exhausted = false;
    // Pops packs that still qualify under the current bound into `out`.
    auto qualify = [&](std::vector<NodeId>& out) {
        while (out.size() < opts.eta && !exhausted) {
            if (queue.empty()) {
                exhausted = true;
                break;
            }
            const auto [lb, id] = queue.top();
            if (lb > heap.bound()) {
                while (!queue.empty()) {
                    r.pruned.push_back({queue.top().second, queue.top().first});
                    queue.pop();
                }
                exhausted = true;
                break;
            }
            queue.pop();
            const Node& n = ix.node(id);
            if (n.is_pack()) {
                if (visited.insert(id).second) out.push_back(id);
                continue;
            }
            for (NodeId ch : n.children) {
                const double clb = q.lower_bound_sq(ix.node(ch).isax);
                ++r.counters.lb_computations;
                if (clb > heap.bound()) r.pruned.emplace_back(ch, clb);
                else queue.emplace(clb, ch);
            }
        }
    };

    struct Loaded {
        NodeId id;
        PackData data;
    };
    // One round: `loaders` tasks read `ids` into `reading` while `computers`
    // tasks scan `ready`, merging into the shared heap once each.
    std::mutex mu;
    auto round = [&](const std::vector<NodeId>& ids, std::vector<Loaded>& reading, std::vector<Loaded>& ready,
                     unsigned loaders, unsigned computers, ThreadPool* pool) {
        reading.resize(ids.size());
        const double snapshot = heap.bound();
        std::atomic<std::size_t> next_load{0};
        std::atomic<std::size_t> next_scan{0};
        auto load = [&] {
            for (std::size_t i = next_load++; i < ids.size(); i = next_load++) {
                reading[i] = {ids[i], ix.read_pack(ids[i])};
            }
        };
        auto compute = [&] {
            KnnHeap local(k);
            SearchCounters c;
            for (std::size_t i = next_scan++; i < ready.size(); i = next_scan++) {
                scan_data(ix, q, ready[i].id, ready[i].data, local, snapshot, c);
            }
            std::lock_guard lock(mu);
            heap.merge(local);
            r.counters += c;
        };
        if (pool == nullptr) {
            load();
            compute();
            return;
        }
        std::vector<std::future<void>> fs;
        for (unsigned g = 0; g < loaders && !ids.empty(); ++g) fs.push_back(pool->submit(load));
        for (unsigned g = 0; g < computers && !ready.empty(); ++g) fs.push_back(pool->submit(compute));
        for (auto& f : fs) f.get();
    };

    std::vector<NodeId> preparing;
    std::vector<Loaded> reading;
    std::vector<Loaded> ready;
    if (opts.workers == 1) {
        while (true) {
            preparing.clear();
            qualify(preparing);
            if (preparing.empty()) break;
            round(preparing, reading, reading, 1, 1, nullptr);
            r.visited.insert(r.visited.end(), preparing.begin(), preparing.end());
        }
    } else {
        const unsigned loaders = std::max(1u, opts.workers / 2);
        const unsigned computers = std::max(1u, opts.workers - loaders);
        ThreadPool pool(loaders + computers);
        while (true) {
            preparing.clear();
            qualify(preparing);
            if (preparing.empty() && ready.empty()) break;
            round(preparing, reading, ready, loaders, computers, &pool);
            r.visited.insert(r.visited.end(), preparing.begin(), preparing.end());
            std::swap(ready, reading);
            reading.clear();
        }
    }
    for (const auto& [node, lb] : r.pruned) r.counters.packs_pruned += ix.node(node).leaf_count;
    finish(r, heap);
    return r;
}

SearchMode parse_search_mode(const std::string& s) {
    if (s == "approx") return SearchMode::Approx;
    if (s == "extended") return SearchMode::Extended;
    if (s == "fuzzy") return SearchMode::Fuzzy;
    if (s == "exact") return SearchMode::Exact;
    if (s == "parallel-exact") return SearchMode::ParallelExact;
    throw InvalidArgument("unknown search mode: " + s);
}

std::string to_string(SearchMode m) {
    switch (m) {
        case SearchMode::Approx: return "approx";
        case SearchMode::Extended: return "extended";
        case SearchMode::Fuzzy: return "fuzzy";
        case SearchMode::Exact: return "exact";
        case SearchMode::ParallelExact: return "parallel-exact";
    }
    return "?";
}

QueryResult search(const Index& ix, const PreparedQuery& q, const SearchRequest& req) {
    switch (req.mode) {
        case SearchMode::Approx: return approx_search(ix, q, req.k);
        case SearchMode::Extended: return extended_approx_search(ix, q, req.k, req.nbr);
        case SearchMode::Fuzzy: return dumpyos_f_search(ix, q, req.k, req.nbr, req.f);
        case SearchMode::Exact: return exact_search(ix, q, req.k);
        case SearchMode::ParallelExact: return parallel_exact_search(ix, q, req.k, req.parallel);
    }
    throw InternalError("unhandled search mode");
}

}  // namespace dumpy
