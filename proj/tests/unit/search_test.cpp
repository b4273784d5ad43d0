#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "dumpy/audit.hpp"
#include "dumpy/eval.hpp"
#include "dumpy/search.hpp"
#include "fixtures.hpp"
#include "knn_oracle.hpp"
#include "temp_dir.hpp"

using namespace dumpy;
using dumpy::testing::oracle_knn;
using dumpy::testing::TempDir;

namespace {

struct Corpus {
    TempDir dir;
    DatasetHandle ds;
    std::vector<std::vector<float>> data;
    std::vector<std::vector<float>> queries;
    Index ix;

    Corpus(std::uint64_t count, std::uint64_t seed, IndexConfig cfg = dumpy::testing::small_config()) {
        ds = gen_random_walk(count, cfg.n, seed, dir / "d.bin");
        data = load_normalized(ds);
        const auto qs = gen_random_walk(20, cfg.n, seed + 1000, dir / "q.bin");
        queries = load_normalized(qs);
        // a few noisy copies of indexed series as well
        const std::vector<double> snr{10.0, 20.0};
        const auto noisy = gen_noisy_queries(ds, 10, snr, seed + 2000, dir / "nq.bin");
        for (auto& q : load_normalized(noisy)) queries.push_back(std::move(q));
        ix = Index::build(ds, cfg, dir / "ix");
    }
};

std::vector<SeriesId> visited_rows(const Index& ix, const QueryResult& r) {
    std::vector<SeriesId> rows;
    for (NodeId p : r.visited) {
        const Node& n = ix.node(p);
        for (std::size_t i = 0; i < n.used(); ++i) {
            if (!n.deleted[i]) rows.push_back(n.slots[i]);
        }
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return rows;
}

void expect_same(const std::vector<Neighbor>& a, const std::vector<Neighbor>& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].ordinal, b[i].ordinal) << "rank " << i;
        EXPECT_EQ(a[i].distance, b[i].distance) << "rank " << i;
    }
}

Corpus& shared() {
    static Corpus c(10000, 31);
    return c;
}

}  // namespace

TEST(KnnHeap, KeepsBestWithOrdinalTies) {
    KnnHeap h(2);
    EXPECT_TRUE(h.offer(4.0, 7));
    EXPECT_TRUE(h.offer(1.0, 9));
    EXPECT_TRUE(h.offer(4.0, 3));
    EXPECT_FALSE(h.offer(4.0, 8));
    EXPECT_FALSE(h.offer(1.0, 9));
    const auto s = h.sorted();
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].ordinal, 9u);
    EXPECT_EQ(s[1].ordinal, 3u);
    EXPECT_EQ(s[1].distance, 2.0);
    EXPECT_THROW(KnnHeap(0), InvalidArgument);
}

TEST(ExactSearch, MatchesFullScanEd) {
    auto& c = shared();
    for (std::size_t k : {1u, 10u}) {
        for (const auto& raw : c.queries) {
            const PreparedQuery q(c.ix, raw);
            const auto got = exact_search(c.ix, q, k);
            expect_same(got.neighbors, oracle_knn(c.data, q.values(), k, DistanceKind::ed()));
            for (const auto& [node, lb] : got.pruned) EXPECT_GT(lb, got.neighbors.back().distance * got.neighbors.back().distance);
        }
    }
}

TEST(ExactSearch, MatchesFullScanDtw) {
    auto& c = shared();
    const auto dtw = DistanceKind::dtw(0.1);
    for (std::size_t k : {1u, 10u}) {
        for (std::size_t i = 0; i < 12; ++i) {
            const PreparedQuery q(c.ix, c.queries[i * 2], dtw);
            const auto got = exact_search(c.ix, q, k);
            expect_same(got.neighbors, oracle_knn(c.data, q.values(), k, dtw));
        }
    }
}

TEST(ExactSearch, WholeDatasetComesBackSorted) {
    TempDir dir;
    const auto ds = gen_random_walk(400, 64, 32, dir / "d.bin");
    const auto data = load_normalized(ds);
    const auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    const PreparedQuery q(ix, DatasetReader(ds).raw(17));
    const auto got = exact_search(ix, q, 400);
    expect_same(got.neighbors, oracle_knn(data, q.values(), 400, DistanceKind::ed()));
    EXPECT_EQ(got.neighbors.front().ordinal, 17u);
    EXPECT_EQ(got.neighbors.front().distance, 0.0);
    EXPECT_FALSE(exact_search(ix, q, 401).neighbors.size() != 400);
    EXPECT_TRUE(exact_search(ix, q, 401).incomplete);
}

TEST(ExactSearch, FuzzyIndexStaysExact) {
    auto cfg = dumpy::testing::small_config();
    cfg.fuzzy = 0.3;
    Corpus c(4000, 33, cfg);
    for (const auto& raw : c.queries) {
        const PreparedQuery q(c.ix, raw);
        const auto got = exact_search(c.ix, q, 5);
        expect_same(got.neighbors, oracle_knn(c.data, q.values(), 5, DistanceKind::ed()));
    }
}

TEST(ApproxSearch, SelfRetrievalAndOnePack) {
    auto& c = shared();
    DatasetReader reader(c.ds);
    for (SeriesId i : {0u, 77u, 4242u, 9999u}) {
        const PreparedQuery q(c.ix, reader.raw(i));
        const auto r = approx_search(c.ix, q, 1);
        ASSERT_EQ(r.neighbors.size(), 1u);
        EXPECT_EQ(r.neighbors[0].distance, 0.0);
        EXPECT_EQ(r.counters.packs_visited, 1u);
        ASSERT_EQ(r.visited.size(), 1u);
        EXPECT_EQ(r.visited[0], c.ix.route(c.ix.sax().row(i)));
    }
}

TEST(ExtendedSearch, OneNodeBudgetIsApproxSearch) {
    auto& c = shared();
    for (const auto& raw : c.queries) {
        const PreparedQuery q(c.ix, raw);
        const auto a = approx_search(c.ix, q, 5);
        const auto e = extended_approx_search(c.ix, q, 5, 1);
        expect_same(a.neighbors, e.neighbors);
        EXPECT_EQ(a.visited, e.visited);
    }
}

TEST(ExtendedSearch, FullBudgetIsBruteForce) {
    auto& c = shared();
    const std::size_t leaves = c.ix.packs().size();
    for (std::size_t i = 0; i < 5; ++i) {
        const PreparedQuery q(c.ix, c.queries[i]);
        const auto e = extended_approx_search(c.ix, q, 10, leaves);
        expect_same(e.neighbors, oracle_knn(c.data, q.values(), 10, DistanceKind::ed()));
        EXPECT_EQ(e.visited.size(), leaves);
    }
}

TEST(ExtendedSearch, ResultIsKnnOfVisitedAndMonotone) {
    auto& c = shared();
    for (const auto& raw : c.queries) {
        const PreparedQuery q(c.ix, raw);
        std::vector<SeriesId> prev_rows;
        double prev_best = kInf;
        for (std::size_t nbr : {1u, 5u, 25u}) {
            const auto e = extended_approx_search(c.ix, q, 5, nbr);
            EXPECT_EQ(e.visited.size(), nbr);
            EXPECT_EQ(std::set<NodeId>(e.visited.begin(), e.visited.end()).size(), e.visited.size());
            const auto rows = visited_rows(c.ix, e);
            expect_same(e.neighbors, oracle_knn(c.data, q.values(), 5, DistanceKind::ed(), &rows));
            EXPECT_TRUE(std::includes(rows.begin(), rows.end(), prev_rows.begin(), prev_rows.end())) << "nbr " << nbr;
            EXPECT_LE(e.neighbors.front().distance, prev_best);
            const auto truth = oracle_knn(c.data, q.values(), 5, DistanceKind::ed());
            for (std::size_t i = 0; i < 5; ++i) EXPECT_GE(e.neighbors[i].distance, truth[i].distance);
            prev_rows = rows;
            prev_best = e.neighbors.front().distance;
        }
    }
}

TEST(FuzzySearch, OneNodeBudgetIsApproxSearch) {
    auto& c = shared();
    for (const auto& raw : c.queries) {
        const PreparedQuery q(c.ix, raw);
        const auto a = approx_search(c.ix, q, 3);
        const auto f = dumpyos_f_search(c.ix, q, 3, 1, 0.3);
        expect_same(a.neighbors, f.neighbors);
        EXPECT_EQ(a.visited, f.visited);
    }
}

TEST(FuzzySearch, TinyBandIsExtendedSearch) {
    auto& c = shared();
    for (const auto& raw : c.queries) {
        const PreparedQuery q(c.ix, raw);
        for (std::size_t nbr : {2u, 5u, 25u}) {
            const auto e = extended_approx_search(c.ix, q, 3, nbr);
            const auto f = dumpyos_f_search(c.ix, q, 3, nbr, 1e-15);
            expect_same(e.neighbors, f.neighbors);
            EXPECT_EQ(std::set<NodeId>(e.visited.begin(), e.visited.end()),
                      std::set<NodeId>(f.visited.begin(), f.visited.end()));
        }
    }
}

TEST(FuzzySearch, BudgetAndLocalOptimality) {
    auto& c = shared();
    for (const auto& raw : c.queries) {
        const PreparedQuery q(c.ix, raw);
        for (std::size_t nbr : {2u, 5u, 10u}) {
            const auto f = dumpyos_f_search(c.ix, q, 5, nbr, 0.3);
            EXPECT_LE(f.visited.size(), nbr);
            EXPECT_EQ(std::set<NodeId>(f.visited.begin(), f.visited.end()).size(), f.visited.size());
            const auto rows = visited_rows(c.ix, f);
            expect_same(f.neighbors, oracle_knn(c.data, q.values(), 5, DistanceKind::ed(), &rows));
        }
    }
}

TEST(AdaptedRouting, NearestLeafOfTheFuzzyNode) {
    auto& c = shared();
    std::size_t checked = 0;
    for (const auto& raw : c.queries) {
        const PreparedQuery q(c.ix, raw);
        for (NodeId id = 1; id < static_cast<NodeId>(c.ix.nodes().size()); ++id) {
            const Node& n = c.ix.node(id);
            if (!n.is_internal()) continue;
            int outside = 0;
            for (int s = 0; s < n.isax.segments(); ++s) outside += !n.isax.covers_segment(s, q.sax()[s]);
            if (outside != 1) continue;
            // the parent must hold the query so that the node is one flip away
            if (!c.ix.node(n.parent).isax.covers(q.sax())) continue;
            const NodeId leaf = adapted_routing(c.ix, id, q);
            ASSERT_NE(leaf, kNoNode);
            const double best = q.lower_bound_sq(c.ix.node(leaf).isax);
            std::vector<NodeId> stack{id};
            while (!stack.empty()) {
                const Node& m = c.ix.node(stack.back());
                stack.pop_back();
                if (m.is_pack()) {
                    EXPECT_LE(best, q.lower_bound_sq(m.isax) * (1 + 1e-12));
                } else {
                    stack.insert(stack.end(), m.children.begin(), m.children.end());
                }
            }
            ++checked;
        }
    }
    EXPECT_GT(checked, 0u);
}

TEST(AdaptedRouting, RejectsNodesHoldingTheQuery) {
    auto& c = shared();
    const PreparedQuery q(c.ix, c.queries[0]);
    EXPECT_THROW((void)adapted_routing(c.ix, kRootId, q), InternalError);
}

TEST(ParallelExactSearch, MatchesSerialAtEveryWorkerCount) {
    auto& c = shared();
    for (unsigned workers : {1u, 2u, 4u, 8u}) {
        for (std::size_t eta : {1u, 3u, 16u}) {
            for (std::size_t i = 0; i < c.queries.size(); i += 3) {
                const PreparedQuery q(c.ix, c.queries[i]);
                const auto s = exact_search(c.ix, q, 10);
                const auto p = parallel_exact_search(c.ix, q, 10, {eta, workers});
                expect_same(s.neighbors, p.neighbors);
                EXPECT_EQ(std::set<NodeId>(p.visited.begin(), p.visited.end()).size(), p.visited.size());
                if (workers == 1 && eta == 1) EXPECT_EQ(s.visited, p.visited);
            }
        }
    }
}

TEST(ParallelExactSearch, DtwMatchesSerial) {
    auto& c = shared();
    const auto dtw = DistanceKind::dtw(0.1);
    for (std::size_t i = 0; i < 6; ++i) {
        const PreparedQuery q(c.ix, c.queries[i], dtw);
        expect_same(exact_search(c.ix, q, 5).neighbors, parallel_exact_search(c.ix, q, 5, {4, 4}).neighbors);
    }
}

TEST(SearchAfterUpdates, ExactTracksMembership) {
    TempDir dir;
    const auto ds = gen_random_walk(2000, 64, 34, dir / "d.bin");
    auto data = load_normalized(ds);
    auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    std::mt19937_64 rng(35);
    std::set<SeriesId> live;
    for (SeriesId i = 0; i < data.size(); ++i) live.insert(i);
    for (int step = 0; step < 600; ++step) {
        if (rng() % 2) {
            const auto s = dumpy::testing::random_walk(64, rng);
            const SeriesId o = ix.insert(s);
            std::vector<float> z(64);
            normalize_into(s, z);
            data.push_back(z);
            ASSERT_EQ(o, data.size() - 1);
            live.insert(o);
        } else {
            auto it = live.begin();
            std::advance(it, static_cast<long>(rng() % live.size()));
            ASSERT_TRUE(ix.erase(*it));
            live.erase(it);
        }
    }
    const std::vector<SeriesId> subset(live.begin(), live.end());
    for (int i = 0; i < 10; ++i) {
        const auto raw = dumpy::testing::random_walk(64, rng);
        const PreparedQuery q(ix, raw);
        expect_same(exact_search(ix, q, 7).neighbors, oracle_knn(data, q.values(), 7, DistanceKind::ed(), &subset));
    }
}

TEST(SearchModes, ParseAndDispatch) {
    for (auto m : {SearchMode::Approx, SearchMode::Extended, SearchMode::Fuzzy, SearchMode::Exact,
                   SearchMode::ParallelExact}) {
        EXPECT_EQ(parse_search_mode(to_string(m)), m);
    }
    EXPECT_THROW((void)parse_search_mode("nope"), InvalidArgument);
    auto& c = shared();
    const PreparedQuery q(c.ix, c.queries[0]);
    SearchRequest req;
    req.k = 3;
    req.mode = SearchMode::ParallelExact;
    expect_same(search(c.ix, q, req).neighbors, exact_search(c.ix, q, 3).neighbors);
    EXPECT_THROW((void)PreparedQuery(c.ix, std::vector<float>(10)), InvalidArgument);
}
