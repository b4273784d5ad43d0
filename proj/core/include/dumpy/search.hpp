#pragma once

// Query answering over a built index: one-pack approximate search, extended
// approximate search over a pack budget, query-time fuzzy search, exact
// pruning search and its pipelined parallel variant.
//
// Searches read the index without locking. Callers that mix queries with
// concurrent updates hold Index::read_lock() for the duration of a query.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dumpy/distance.hpp"
#include "dumpy/index.hpp"
#include "dumpy/knn.hpp"

namespace dumpy {

struct SearchCounters {
    std::uint64_t packs_visited = 0;
    std::uint64_t series_scanned = 0;  // live records compared
    std::uint64_t bytes_read = 0;
    std::uint64_t lb_computations = 0;
    std::uint64_t distance_computations = 0;  // full or abandoned, after any LB_Keogh filter
    std::uint64_t packs_pruned = 0;

    SearchCounters& operator+=(const SearchCounters& o);
};

struct QueryResult {
    std::vector<Neighbor> neighbors;  // ascending by (distance, ordinal)
    SearchCounters counters;
    std::vector<NodeId> visited;                      // packs in visiting order
    std::vector<std::pair<NodeId, double>> pruned;    // exact search: node and its squared lower bound
    bool incomplete = false;                          // fewer than k results
};

/// A query z-normalized and summarized at the index configuration.
class PreparedQuery {
public:
    PreparedQuery(const Index& ix, std::span<const float> series, DistanceKind dist = DistanceKind::ed(),
                  bool normalize = true);
    PreparedQuery(std::span<const float> series, int w, int bits, DistanceKind dist = DistanceKind::ed(),
                  bool normalize = true);

    [[nodiscard]] std::span<const float> values() const { return values_; }
    [[nodiscard]] std::span<const double> paa() const { return paa_; }
    [[nodiscard]] std::span<const std::uint8_t> sax() const { return sax_; }
    [[nodiscard]] const DistanceKind& distance() const { return dist_; }
    [[nodiscard]] std::size_t window() const { return window_; }

    /// Squared lower bound from the query to anything under `word`.
    [[nodiscard]] double lower_bound_sq(const IsaxWord& word) const;
    /// Squared distance to a stored series; anything > bound_sq means "not closer".
    [[nodiscard]] double distance_sq(std::span<const float> s, double bound_sq, SearchCounters& c) const;

private:
    SaxAlphabet alphabet_;
    std::size_t n_;
    DistanceKind dist_;
    std::size_t window_ = 0;
    std::vector<float> values_;
    std::vector<double> paa_;
    std::vector<std::uint8_t> sax_;
    Envelope env_;
    EnvelopePaa env_paa_;
};

QueryResult approx_search(const Index& ix, const PreparedQuery& q, std::size_t k);
QueryResult extended_approx_search(const Index& ix, const PreparedQuery& q, std::size_t k, std::size_t nbr);
QueryResult dumpyos_f_search(const Index& ix, const PreparedQuery& q, std::size_t k, std::size_t nbr, double f);
/// Leaf nearest to the query below a fuzzy internal node: the one segment
/// whose label the query falls outside of is routed towards the query.
NodeId adapted_routing(const Index& ix, NodeId fuzzy_node, const PreparedQuery& q);
QueryResult exact_search(const Index& ix, const PreparedQuery& q, std::size_t k);

struct ParallelSearchOptions {
    std::size_t eta = 8;  // packs per buffer
    unsigned workers = 2;
};

/// Exact search with a loading group filling one buffer while a computing
/// group scans the other. workers == 1 runs the stages in lock-step.
QueryResult parallel_exact_search(const Index& ix, const PreparedQuery& q, std::size_t k,
                                  const ParallelSearchOptions& opts);

enum class SearchMode { Approx, Extended, Fuzzy, Exact, ParallelExact };

SearchMode parse_search_mode(const std::string& s);
std::string to_string(SearchMode m);

struct SearchRequest {
    SearchMode mode = SearchMode::Exact;
    std::size_t k = 1;
    std::size_t nbr = 1;
    double f = 0.3;
    ParallelSearchOptions parallel;
};

QueryResult search(const Index& ix, const PreparedQuery& q, const SearchRequest& req);

}  // namespace dumpy
