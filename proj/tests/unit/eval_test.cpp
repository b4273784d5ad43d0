#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dumpy/eval.hpp"
#include "dumpy/search.hpp"
#include "fixtures.hpp"
#include "knn_oracle.hpp"
#include "temp_dir.hpp"

using namespace dumpy;
using dumpy::testing::TempDir;

namespace {
std::vector<Neighbor> nb(std::initializer_list<std::pair<SeriesId, double>> xs) {
    std::vector<Neighbor> out;
    for (auto [o, d] : xs) out.push_back({o, d});
    return out;
}
}  // namespace

TEST(AveragePrecision, HandCases) {
    const auto truth2 = nb({{1, 1.0}, {2, 2.0}});
    EXPECT_DOUBLE_EQ(average_precision(truth2, truth2, 2), 1.0);
    EXPECT_DOUBLE_EQ(average_precision(nb({{1, 1.0}, {9, 3.0}}), truth2, 2), 0.5);
    EXPECT_DOUBLE_EQ(average_precision(nb({{9, 3.0}}), nb({{1, 1.0}}), 1), 0.0);
    EXPECT_DOUBLE_EQ(average_precision(nb({{1, 1.0}}), nb({{1, 1.0}}), 1), 1.0);
    // wrong, right, right: (0 + 1/2 + 2/3) / 3
    const auto truth3 = nb({{1, 1.0}, {2, 2.0}, {3, 3.0}});
    EXPECT_DOUBLE_EQ(average_precision(nb({{9, 3.5}, {1, 1.0}, {2, 2.0}}), truth3, 3), (0.5 + 2.0 / 3.0) / 3.0);
    // a different ordinal at a tied distance counts as relevant
    EXPECT_DOUBLE_EQ(average_precision(nb({{7, 1.0}}), nb({{1, 1.0}}), 1), 1.0);
    // short results
    EXPECT_DOUBLE_EQ(average_precision(nb({{1, 1.0}}), truth2, 2), 0.5);
}

TEST(MapScore, MeanOfQueries) {
    const Answers truth{nb({{1, 1.0}}), nb({{2, 1.0}})};
    const Answers res{nb({{1, 1.0}}), nb({{5, 2.0}})};
    EXPECT_DOUBLE_EQ(map_score(res, truth, 1), 0.5);
    EXPECT_DOUBLE_EQ(map_score(truth, truth, 1), 1.0);
    EXPECT_THROW((void)map_score(res, Answers{}, 1), InvalidArgument);
}

TEST(ErrorRatio, HandCases) {
    EXPECT_DOUBLE_EQ(error_ratio({nb({{4, 1.05}})}, {nb({{1, 1.0}})}, 1).mean, 1.05);
    const Answers truth{nb({{1, 1.0}, {2, 2.0}})};
    EXPECT_DOUBLE_EQ(error_ratio(truth, truth, 2).mean, 1.0);
    EXPECT_DOUBLE_EQ(error_ratio({nb({{1, 1.0}, {3, 3.0}})}, truth, 2).mean, 1.25);
    const auto zero = error_ratio({nb({{1, 0.0}, {3, 3.0}})}, {nb({{1, 0.0}, {2, 2.0}})}, 2);
    EXPECT_EQ(zero.skipped, 1u);
    EXPECT_DOUBLE_EQ(zero.mean, 1.5);
}

TEST(BruteForce, MatchesOracleAndCaches) {
    TempDir dir;
    const auto ds = gen_random_walk(3000, 64, 41, dir / "d.bin");
    const auto data = load_normalized(ds);
    const auto qs = load_normalized(gen_random_walk(8, 64, 42, dir / "q.bin"));
    for (auto dist : {DistanceKind::ed(), DistanceKind::dtw(0.1)}) {
        const auto got = brute_force_knn(ds, qs, 6, dist, 3);
        for (std::size_t i = 0; i < qs.size(); ++i) {
            std::vector<float> z(64);
            normalize_into(qs[i], z);
            const auto want = dumpy::testing::oracle_knn(data, z, 6, dist);
            ASSERT_EQ(got[i].size(), want.size());
            for (std::size_t j = 0; j < want.size(); ++j) {
                EXPECT_EQ(got[i][j].ordinal, want[j].ordinal);
                EXPECT_EQ(got[i][j].distance, want[j].distance);
            }
        }
        bool hit = true;
        const auto first = cached_ground_truth(ds, qs, 6, dist, dir / "gt", 1, &hit);
        EXPECT_FALSE(hit);
        const auto second = cached_ground_truth(ds, qs, 6, dist, dir / "gt", 1, &hit);
        EXPECT_TRUE(hit);
        EXPECT_EQ(first, got);
        EXPECT_EQ(second, got);
    }
}

TEST(BruteForce, SelfQueryAndWholeDataset) {
    TempDir dir;
    const auto ds = gen_random_walk(300, 64, 43, dir / "d.bin");
    const auto data = load_normalized(ds);
    const auto got = brute_force_knn(ds, {DatasetReader(ds).raw(12)}, 300, DistanceKind::ed());
    ASSERT_EQ(got[0].size(), 300u);
    EXPECT_EQ(got[0][0].ordinal, 12u);
    EXPECT_EQ(got[0][0].distance, 0.0);
    EXPECT_TRUE(std::is_sorted(got[0].begin(), got[0].end(),
                               [](const auto& a, const auto& b) { return a.distance < b.distance; }));
}

TEST(GroundTruthFile, KeyMismatchAndCorruption) {
    TempDir dir;
    const GroundTruthKey key{1, 2, 3, DistanceKind::ed()};
    const Answers a{nb({{1, 0.5}, {2, 0.75}})};
    save_ground_truth(dir / "gt.bin", key, a);
    EXPECT_EQ(*load_ground_truth(dir / "gt.bin", key), a);
    EXPECT_FALSE(load_ground_truth(dir / "gt.bin", GroundTruthKey{1, 2, 4, DistanceKind::ed()}));
    EXPECT_FALSE(load_ground_truth(dir / "missing.bin", key));
    auto bytes = read_file(dir / "gt.bin");
    bytes.pop_back();
    write_file(dir / "gt.bin", bytes);
    EXPECT_THROW((void)load_ground_truth(dir / "gt.bin", key), FormatError);
}

TEST(ExactSearch, AgreesWithBruteForceAndScoresPerfectly) {
    TempDir dir;
    const auto ds = gen_random_walk(5000, 64, 44, dir / "d.bin");
    const auto qs = load_normalized(gen_random_walk(15, 64, 45, dir / "q.bin"));
    const auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    const auto truth = brute_force_knn(ds, qs, 10, DistanceKind::ed());
    Answers exact, approx;
    for (const auto& raw : qs) {
        const PreparedQuery q(ix, raw);
        exact.push_back(exact_search(ix, q, 10).neighbors);
        approx.push_back(approx_search(ix, q, 10).neighbors);
    }
    EXPECT_EQ(exact, truth);
    EXPECT_DOUBLE_EQ(map_score(exact, truth, 10), 1.0);
    EXPECT_DOUBLE_EQ(error_ratio(exact, truth, 10).mean, 1.0);
    const double m = map_score(approx, truth, 10);
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
    const auto er = error_ratio(approx, truth, 10);
    for (double v : er.per_query) {
        if (!std::isnan(v)) EXPECT_GE(v, 1.0);
    }
}

TEST(IndexStats, MatchesAPackWalk) {
    TempDir dir;
    const auto ds = gen_random_walk(5000, 64, 46, dir / "d.bin");
    const auto cfg = dumpy::testing::small_config();
    const auto ix = Index::build(ds, cfg, dir / "ix");
    const auto s = index_stats(ix);
    std::uint64_t leaves = 0, total = 0, nodes = 0;
    std::uint32_t height = 0;
    for (const Node& n : ix.nodes()) {
        if (n.kind == NodeKind::Free) continue;
        ++nodes;
        if (!n.is_pack()) continue;
        ++leaves;
        total += n.live();
        height = std::max<std::uint32_t>(height, n.layer);
    }
    EXPECT_EQ(s.leaves, leaves);
    EXPECT_EQ(s.nodes, nodes);
    EXPECT_EQ(s.height, height);
    EXPECT_EQ(s.series, 5000u);
    EXPECT_DOUBLE_EQ(s.fill_factor, static_cast<double>(total) / (static_cast<double>(leaves) * cfg.th));
}

TEST(IndexStats, SinglePack) {
    TempDir dir;
    std::mt19937_64 rng(47);
    const auto base = dumpy::testing::random_walk(64, rng);
    std::normal_distribution<float> noise(0.0f, 0.01f);
    std::vector<float> rows;
    for (int i = 0; i < 50; ++i) {
        for (float v : base) rows.push_back(v + noise(rng));
    }
    const auto ds = write_dataset(dir / "d.bin", 64, rows);
    const auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    const auto s = index_stats(ix);
    EXPECT_EQ(s.leaves, 1u);
    EXPECT_EQ(s.height, 1u);
    EXPECT_DOUBLE_EQ(s.fill_factor, 0.5);
}

TEST(Latency, NearestRankPercentiles) {
    std::vector<double> ms;
    for (int i = 1; i <= 100; ++i) ms.push_back(i);
    const auto s = summarize_latency(ms);
    EXPECT_DOUBLE_EQ(s.p50_ms, 50);
    EXPECT_DOUBLE_EQ(s.p90_ms, 90);
    EXPECT_DOUBLE_EQ(s.p99_ms, 99);
    EXPECT_DOUBLE_EQ(s.max_ms, 100);
    EXPECT_DOUBLE_EQ(s.mean_ms, 50.5);
}
