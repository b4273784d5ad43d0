#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <fstream>
#include <random>
#include <set>

#include "dumpy/audit.hpp"
#include "dumpy/error.hpp"
#include "dumpy/index.hpp"
#include "dumpy/packing.hpp"
#include "fixtures.hpp"
#include "temp_dir.hpp"

using namespace dumpy;
using dumpy::testing::TempDir;

namespace {

void expect_sound(const Index& ix, const std::optional<std::vector<SeriesId>>& expected = std::nullopt) {
    const auto s = audit_structure(ix);
    EXPECT_TRUE(s.ok()) << s.problems.front();
    const auto m = audit_membership(ix, expected);
    EXPECT_TRUE(m.ok()) << m.problems.front();
}

std::uint64_t duplicate_count(const Index& ix) {
    std::uint64_t d = 0;
    for (NodeId id : ix.packs()) {
        const Node& p = ix.node(id);
        for (std::size_t i = 0; i < p.used(); ++i) d += p.duplicate[i] && !p.deleted[i];
    }
    return d;
}

}  // namespace

TEST(PackLeaves, FourSiblings) {
    const std::vector<PackCandidate> c{{0b0000, 60}, {0b0001, 30}, {0b1111, 50}, {0b1110, 40}};
    const auto packs = pack_leaves(c, 0.5, 100, 4);
    ASSERT_EQ(packs.size(), 2u);
    std::set<std::set<Sid>> groups;
    for (const auto& p : packs) groups.insert({p.members.begin(), p.members.end()});
    EXPECT_TRUE(groups.count({0b0000, 0b0001}));
    EXPECT_TRUE(groups.count({0b1110, 0b1111}));
    for (const auto& p : packs) {
        EXPECT_EQ(p.size, 90u);
        EXPECT_EQ(p.demoted_mask, 0b0001u);
        EXPECT_EQ(p.demotion_bits(), 1);
    }
}

TEST(PackLeaves, ZeroRhoKeepsLeavesApart) {
    const std::vector<PackCandidate> c{{0, 1}, {1, 1}, {2, 1}, {3, 1}};
    EXPECT_EQ(pack_leaves(c, 0.0, 100, 2).size(), 4u);
}

TEST(PackLeaves, OversizedCandidateRejected) {
    const std::vector<PackCandidate> c{{0, 101}};
    EXPECT_THROW((void)pack_leaves(c, 0.5, 100, 2), InvalidArgument);
}

TEST(PackLeaves, RandomInstancesRespectLimits) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int lambda = 1 + static_cast<int>(rng() % 8);
        const double rho = std::uniform_real_distribution<double>(0, 1)(rng);
        const std::size_t th = 50 + rng() % 200;
        std::vector<PackCandidate> c;
        for (Sid s = 0; s < (Sid{1} << lambda); ++s) {
            if (rng() % 3 == 0) c.push_back({s, 1 + rng() % th});
        }
        const auto packs = pack_leaves(c, rho, th, lambda);
        std::multiset<Sid> seen;
        for (const auto& p : packs) {
            ASSERT_FALSE(p.members.empty());
            std::uint64_t size = 0;
            Sid mask = 0;
            for (Sid m : p.members) {
                seen.insert(m);
                mask |= m ^ p.members.front();
                size += std::find_if(c.begin(), c.end(), [&](const auto& x) { return x.sid == m; })->size;
            }
            EXPECT_EQ(size, p.size);
            EXPECT_LE(size, th);
            EXPECT_EQ(mask, p.demoted_mask);
            EXPECT_LE(std::popcount(mask), demotion_budget(rho, lambda));
        }
        EXPECT_EQ(seen.size(), c.size());
        for (const auto& x : c) EXPECT_EQ(seen.count(x.sid), 1u);
    }
}

TEST(IndexBuild, SmallCorpusIsSound) {
    TempDir dir;
    const auto ds = gen_random_walk(5000, 64, 3, dir / "d.bin");
    const auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    expect_sound(ix, dumpy::testing::iota_ids(ds.count));
    EXPECT_EQ(ix.series_count(), ds.count);
    EXPECT_EQ(ix.root().size, ds.count);
    EXPECT_EQ(ix.root().csl.size(), 8u);
    EXPECT_GT(ix.packs().size(), 1u);
}

TEST(IndexBuild, RecordsHoldNormalizedSeries) {
    TempDir dir;
    const auto ds = gen_random_walk(1500, 64, 4, dir / "d.bin");
    const auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    DatasetReader reader(ds);
    for (NodeId id : ix.packs()) {
        const auto data = ix.read_pack(id);
        for (std::size_t i = 0; i < data.count(); ++i) {
            const auto want = reader.normalized(data.ordinals[i]);
            const auto got = data.series(i);
            ASSERT_TRUE(std::equal(want.begin(), want.end(), got.begin())) << "ordinal " << data.ordinals[i];
        }
    }
}

TEST(IndexBuild, IndependentOfBatchingAndWorkers) {
    TempDir dir;
    const auto ds = gen_random_walk(3000, 64, 5, dir / "d.bin");
    const auto cfg = dumpy::testing::small_config();
    const auto a = Index::build(ds, cfg, dir / "a");
    const auto b = Index::build(ds, cfg, dir / "b", {.batch_series = 77, .workers = 3});
    EXPECT_TRUE(same_structure(a, b));
}

TEST(IndexBuild, BinarySplitBaseline) {
    TempDir dir;
    const auto ds = gen_random_walk(3000, 64, 6, dir / "d.bin");
    auto cfg = dumpy::testing::small_config();
    cfg.binary_split = true;
    const auto ix = Index::build(ds, cfg, dir / "ix");
    expect_sound(ix, dumpy::testing::iota_ids(ds.count));
    for (const Node& n : ix.nodes()) {
        if (n.is_internal() && n.parent != kNoNode) EXPECT_EQ(n.csl.size(), 1u);
        if (n.is_pack()) EXPECT_EQ(n.sids.size(), 1u);
    }
}

TEST(IndexBuild, RejectsLengthMismatch) {
    TempDir dir;
    const auto ds = gen_random_walk(100, 32, 7, dir / "d.bin");
    EXPECT_THROW((void)Index::build(ds, dumpy::testing::small_config(), dir / "ix"), InvalidArgument);
}

TEST(IndexBuild, IdenticalSeriesMakeAnOversizedPack) {
    TempDir dir;
    std::mt19937_64 rng(8);
    const auto base = dumpy::testing::random_walk(64, rng);
    std::vector<float> rows;
    for (int i = 0; i < 300; ++i) rows.insert(rows.end(), base.begin(), base.end());
    const auto ds = write_dataset(dir / "d.bin", 64, rows);
    const auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    expect_sound(ix, dumpy::testing::iota_ids(300));
    const auto packs = ix.packs();
    ASSERT_EQ(packs.size(), 1u);
    EXPECT_TRUE(ix.node(packs[0]).oversized);
    EXPECT_EQ(ix.node(packs[0]).live(), 300u);
}

TEST(IndexIo, SaveOpenRoundTrip) {
    TempDir dir;
    const auto ds = gen_random_walk(2000, 64, 9, dir / "d.bin");
    auto cfg = dumpy::testing::small_config();
    cfg.fuzzy = 0.2;
    const auto a = Index::build(ds, cfg, dir / "ix");
    const auto b = Index::open(dir / "ix", 64);
    EXPECT_TRUE(same_structure(a, b));
    EXPECT_EQ(b.config(), cfg);
    expect_sound(b, dumpy::testing::iota_ids(ds.count));
}

TEST(IndexIo, WrongLengthIsAFormatError) {
    TempDir dir;
    const auto ds = gen_random_walk(500, 64, 10, dir / "d.bin");
    (void)Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    EXPECT_THROW((void)Index::open(dir / "ix", 128), FormatError);
}

TEST(IndexIo, CorruptTreeIsAFormatError) {
    TempDir dir;
    const auto ds = gen_random_walk(500, 64, 11, dir / "d.bin");
    (void)Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    const auto tree = dir.path() / "ix" / "tree.bin";
    auto bytes = read_file(tree);
    {
        auto bad = bytes;
        bad[0] = std::byte{'X'};
        write_file(tree, bad);
        EXPECT_THROW((void)Index::open(dir / "ix"), FormatError);
    }
    {
        auto bad = bytes;
        bad.resize(bad.size() / 2);
        write_file(tree, bad);
        EXPECT_THROW((void)Index::open(dir / "ix"), FormatError);
    }
    {
        auto bad = bytes;
        bad.push_back(std::byte{0});
        write_file(tree, bad);
        EXPECT_THROW((void)Index::open(dir / "ix"), FormatError);
    }
    write_file(tree, bytes);
    EXPECT_NO_THROW((void)Index::open(dir / "ix"));
}

TEST(IndexIo, MissingDirectoryThrows) {
    TempDir dir;
    EXPECT_THROW((void)Index::open(dir / "nothing"), Error);
}

TEST(FuzzyBuild, CopiesAreJustifiedAndCapped) {
    TempDir dir;
    const auto ds = gen_random_walk(5000, 64, 12, dir / "d.bin");
    auto cfg = dumpy::testing::small_config();
    cfg.fuzzy = 0.3;
    cfg.max_replication = 2;
    const auto ix = Index::build(ds, cfg, dir / "ix");
    expect_sound(ix, dumpy::testing::iota_ids(ds.count));
    PaaTable paa;
    (void)build_sax_table(ds, cfg.w, cfg.bits, {.paa = &paa});
    const auto f = audit_fuzzy(ix, paa);
    EXPECT_TRUE(f.ok()) << f.problems.front();
    EXPECT_GT(f.checked, 0u);
    EXPECT_EQ(f.checked, duplicate_count(ix));
}

TEST(FuzzyBuild, SameWordsAsThePlainBuild) {
    TempDir dir;
    const auto ds = gen_random_walk(4000, 64, 13, dir / "d.bin");
    auto cfg = dumpy::testing::small_config();
    const auto plain = Index::build(ds, cfg, dir / "a");
    cfg.fuzzy = 0.25;
    const auto fuzzy = Index::build(ds, cfg, dir / "b");
    ASSERT_EQ(plain.nodes().size(), fuzzy.nodes().size());
    for (std::size_t i = 0; i < plain.nodes().size(); ++i) {
        EXPECT_EQ(plain.nodes()[i].isax, fuzzy.nodes()[i].isax);
        EXPECT_EQ(plain.nodes()[i].csl, fuzzy.nodes()[i].csl);
        EXPECT_EQ(plain.nodes()[i].sids, fuzzy.nodes()[i].sids);
    }
    EXPECT_GT(duplicate_count(fuzzy), 0u);
}

TEST(FuzzyBuild, ZeroReplicationBudgetMeansNoCopies) {
    TempDir dir;
    const auto ds = gen_random_walk(2000, 64, 14, dir / "d.bin");
    auto cfg = dumpy::testing::small_config();
    cfg.fuzzy = 0.3;
    cfg.max_replication = 1;
    const auto ix = Index::build(ds, cfg, dir / "ix");
    EXPECT_EQ(duplicate_count(ix), 0u);
}

TEST(IndexUpdate, RandomInsertEraseAgainstAModel) {
    TempDir dir;
    const auto ds = gen_random_walk(1500, 64, 15, dir / "d.bin");
    auto cfg = dumpy::testing::small_config();
    cfg.repack_after = 2;
    auto ix = Index::build(ds, cfg, dir / "ix");
    std::set<SeriesId> live;
    for (SeriesId i = 0; i < ds.count; ++i) live.insert(i);
    std::mt19937_64 rng(16);
    for (int step = 0; step < 3000; ++step) {
        if (rng() % 3 != 0 || live.empty()) {
            const auto s = dumpy::testing::random_walk(64, rng);
            const SeriesId o = ix.insert(s);
            EXPECT_EQ(o, ix.sax().size() - 1);
            live.insert(o);
        } else {
            auto it = live.begin();
            std::advance(it, static_cast<long>(rng() % live.size()));
            EXPECT_TRUE(ix.erase(*it));
            EXPECT_FALSE(ix.erase(*it));
            live.erase(it);
        }
        if (step % 500 == 499) expect_sound(ix, std::vector<SeriesId>(live.begin(), live.end()));
    }
    EXPECT_EQ(ix.series_count(), live.size());
    const auto& st = ix.update_stats();
    EXPECT_GT(st.splits, 0u);
    EXPECT_GT(st.extractions, 0u);
    EXPECT_GT(st.repacks, 0u);
    EXPECT_GT(st.relocations, 0u);
    ix.save();
    const auto re = Index::open(dir / "ix");
    EXPECT_TRUE(same_structure(ix, re));
    expect_sound(re, std::vector<SeriesId>(live.begin(), live.end()));
}

TEST(IndexUpdate, EraseRemovesFuzzyCopies) {
    TempDir dir;
    const auto ds = gen_random_walk(3000, 64, 17, dir / "d.bin");
    auto cfg = dumpy::testing::small_config();
    cfg.fuzzy = 0.3;
    auto ix = Index::build(ds, cfg, dir / "ix");
    SeriesId copied = 0;
    bool found = false;
    for (NodeId id : ix.packs()) {
        const Node& p = ix.node(id);
        for (std::size_t i = 0; i < p.used() && !found; ++i) {
            if (p.duplicate[i]) {
                copied = p.slots[i];
                found = true;
            }
        }
    }
    ASSERT_TRUE(found);
    ASSERT_TRUE(ix.erase(copied));
    for (NodeId id : ix.packs()) {
        const Node& p = ix.node(id);
        for (std::size_t i = 0; i < p.used(); ++i) {
            if (p.slots[i] == copied) EXPECT_TRUE(p.deleted[i]);
        }
    }
    EXPECT_FALSE(ix.contains(copied));
    expect_sound(ix);
}

TEST(IndexUpdate, DeletedSlotsAreReused) {
    TempDir dir;
    const auto ds = gen_random_walk(2000, 64, 18, dir / "d.bin");
    auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    DatasetReader reader(ds);
    const SeriesId victim = 123;
    const NodeId pack = ix.route(ix.sax().row(victim));
    const auto extent = ix.node(pack).extent;
    const auto used = ix.node(pack).used();
    ASSERT_TRUE(ix.erase(victim));
    const SeriesId back = ix.insert(reader.raw(victim));
    EXPECT_EQ(ix.route(ix.sax().row(back)), pack);
    EXPECT_EQ(ix.node(pack).extent, extent);
    EXPECT_EQ(ix.node(pack).used(), used);
    EXPECT_EQ(ix.update_stats().relocations, 0u);
    expect_sound(ix);
}

TEST(IndexUpdate, OverflowOfOneLeafSplitsOnce) {
    TempDir dir;
    const auto ds = gen_random_walk(500, 64, 19, dir / "d.bin");
    const auto cfg = dumpy::testing::small_config();
    auto ix = Index::build(ds, cfg, dir / "ix");
    // series hovering around a segment sign pattern whose first-layer sid is unused
    std::mt19937_64 rng(20);
    std::normal_distribution<double> noise(0.0, 0.1);
    const Node& root = ix.root();
    auto make = [&](unsigned pattern) {
        std::vector<float> s(64);
        for (std::size_t i = 0; i < 64; ++i) {
            const double level = (pattern >> (i / 8)) & 1u ? 1.0 : -1.0;
            s[i] = static_cast<float>(level + noise(rng));
        }
        return s;
    };
    auto sid_of = [&](const std::vector<float>& s) {
        const auto sum = summarize(std::span<const float>(znormalize(s)), 8, 256);
        return promote_isax(root.isax, sum.sax, root.csl);
    };
    unsigned pattern = 1;
    while (pattern < 255 && root.child(sid_of(make(pattern))) != kNoNode) ++pattern;
    ASSERT_LT(pattern, 255u);
    std::vector<std::vector<float>> batch;
    while (batch.size() <= cfg.th) batch.push_back(make(pattern));
    const Sid sid = sid_of(batch[0]);
    for (const auto& s : batch) ASSERT_EQ(sid_of(s), sid);
    ASSERT_EQ(root.child(sid), kNoNode);
    for (std::size_t k = 0; k < cfg.th; ++k) (void)ix.insert(batch[k]);
    EXPECT_EQ(ix.update_stats().splits, 0u);
    (void)ix.insert(batch[cfg.th]);
    EXPECT_EQ(ix.update_stats().splits, 1u);
    EXPECT_TRUE(ix.node(ix.root().child(sid)).is_internal());
    expect_sound(ix);
}

TEST(IndexUpdate, InsertRejectsWrongLength) {
    TempDir dir;
    const auto ds = gen_random_walk(300, 64, 21, dir / "d.bin");
    auto ix = Index::build(ds, dumpy::testing::small_config(), dir / "ix");
    EXPECT_THROW((void)ix.insert(std::vector<float>(63, 0.f)), InvalidArgument);
    EXPECT_FALSE(ix.erase(100000));
}
