#include <filesystem>
#include <memory>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <unistd.h>

#include "dumpy/dataset.hpp"
#include "dumpy/distance.hpp"
#include "dumpy/index.hpp"
#include "dumpy/parallel_build.hpp"
#include "dumpy/sax_table.hpp"
#include "dumpy/search.hpp"
#include "dumpy/split.hpp"

namespace fs = std::filesystem;
using namespace dumpy;

namespace {

constexpr std::uint64_t kSeries = 50000;
constexpr std::size_t kLength = 256;

IndexConfig bench_config() {
    IndexConfig cfg;
    cfg.n = kLength;
    cfg.w = 16;
    cfg.th = 1000;
    return cfg;
}

// One corpus and one index per process, removed at exit.
struct Corpus {
    fs::path dir;
    DatasetHandle ds;
    std::unique_ptr<Index> ix;
    std::vector<std::vector<float>> queries;

    Corpus() {
        dir = fs::temp_directory_path() / ("dumpy-bench-" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        ds = gen_random_walk(kSeries, kLength, 11, dir / "data.bin");
        ix = std::make_unique<Index>(Index::build(ds, bench_config(), dir / "index"));
        const auto qs = gen_random_walk(64, kLength, 12, dir / "queries.bin");
        DatasetReader r(qs);
        for (std::uint64_t i = 0; i < qs.count; ++i) queries.push_back(r.raw(i));
    }
    ~Corpus() {
        ix.reset();
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

Corpus& corpus() {
    static Corpus c;
    return c;
}

std::vector<float> walk(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step;
    std::vector<float> s(n);
    double x = 0;
    for (auto& v : s) v = static_cast<float>(x += step(rng));
    return znormalize<float>(s);
}

void BM_EuclideanDistance(benchmark::State& state) {
    const auto a = walk(kLength, 1), b = walk(kLength, 2);
    for (auto _ : state) benchmark::DoNotOptimize(ed_sq(a, b));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EuclideanDistance);

void BM_Dtw(benchmark::State& state) {
    const auto a = walk(kLength, 1), b = walk(kLength, 2);
    const auto window = DistanceKind::dtw(state.range(0) / 100.0).window(kLength);
    for (auto _ : state) benchmark::DoNotOptimize(dtw_sq(a, b, window));
}
BENCHMARK(BM_Dtw)->Arg(5)->Arg(10);

void BM_LbIsaxEd(benchmark::State& state) {
    const auto q = walk(kLength, 3);
    const auto qp = paa<float>(q, 16);
    const SaxAlphabet alphabet(8);
    const auto s = summarize<float>(walk(kLength, 4), 16, 256);
    std::vector<std::uint8_t> codes(16), depths(16, 3);
    for (int j = 0; j < 16; ++j) codes[j] = static_cast<std::uint8_t>(s.sax[j] >> 5);
    const IsaxWord node(codes, depths, 8);
    for (auto _ : state) benchmark::DoNotOptimize(lb_isax_ed_sq(qp, node, alphabet, kLength));
}
BENCHMARK(BM_LbIsaxEd);

void BM_SummarizeRows(benchmark::State& state) {
    const std::size_t rows = 1024;
    std::vector<float> raw;
    for (std::size_t i = 0; i < rows; ++i) {
        const auto s = walk(kLength, i);
        raw.insert(raw.end(), s.begin(), s.end());
    }
    std::vector<std::uint8_t> sax(rows * 16);
    for (auto _ : state) summarize_rows(raw, kLength, 16, 8, sax, {});
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_SummarizeRows);

void BM_ChooseSplitPlan(benchmark::State& state) {
    const auto& c = corpus();
    std::vector<SeriesId> rows(static_cast<std::size_t>(state.range(0)));
    for (SeriesId i = 0; i < rows.size(); ++i) rows[i] = i;
    SplitParams p;
    p.th = 1000;
    const IsaxWord root(16, 8);
    for (auto _ : state) benchmark::DoNotOptimize(choose_split_plan(c.ix->sax(), rows, root, p));
}
BENCHMARK(BM_ChooseSplitPlan)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);

// Serial reference build against the pipelined build at a few worker counts.
void BM_SerialBuild(benchmark::State& state) {
    const auto& c = corpus();
    for (auto _ : state) {
        const auto dir = c.dir / "serial";
        fs::remove_all(dir);
        benchmark::DoNotOptimize(Index::build(c.ds, bench_config(), dir).series_count());
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(c.ds.bytes()));
}
BENCHMARK(BM_SerialBuild)->Unit(benchmark::kMillisecond)->UseRealTime()->Iterations(3);

void BM_ParallelBuild(benchmark::State& state) {
    const auto& c = corpus();
    const auto plan = BuildPipelinePlan::uniform(static_cast<unsigned>(state.range(0)));
    double overlap = 0;
    for (auto _ : state) {
        const auto dir = c.dir / "parallel";
        fs::remove_all(dir);
        PipelineReport rep;
        benchmark::DoNotOptimize(parallel_build(c.ds, bench_config(), dir, plan, &rep).series_count());
        overlap = rep.overlap_fraction;
    }
    state.counters["overlap"] = overlap;
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(c.ds.bytes()));
}
BENCHMARK(BM_ParallelBuild)->Arg(1)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond)->UseRealTime()->Iterations(3);

template <class Fn>
void run_queries(benchmark::State& state, Fn fn) {
    const auto& c = corpus();
    std::size_t i = 0;
    SearchCounters total;
    for (auto _ : state) {
        const auto r = fn(*c.ix, c.queries[i++ % c.queries.size()]);
        total += r.counters;
        benchmark::DoNotOptimize(r.neighbors.data());
    }
    const double it = static_cast<double>(state.iterations());
    state.counters["leaves"] = static_cast<double>(total.packs_visited) / it;
    state.counters["scanned"] = static_cast<double>(total.series_scanned) / it;
}

void BM_ApproxSearch(benchmark::State& state) {
    run_queries(state, [](const Index& ix, const std::vector<float>& q) {
        return approx_search(ix, PreparedQuery(ix, q), 1);
    });
}
BENCHMARK(BM_ApproxSearch)->Unit(benchmark::kMicrosecond);

void BM_ExtendedSearch(benchmark::State& state) {
    const auto nbr = static_cast<std::size_t>(state.range(0));
    run_queries(state, [nbr](const Index& ix, const std::vector<float>& q) {
        return extended_approx_search(ix, PreparedQuery(ix, q), 1, nbr);
    });
}
BENCHMARK(BM_ExtendedSearch)->Arg(5)->Arg(25)->Unit(benchmark::kMicrosecond);

void BM_FuzzySearch(benchmark::State& state) {
    const auto nbr = static_cast<std::size_t>(state.range(0));
    run_queries(state, [nbr](const Index& ix, const std::vector<float>& q) {
        return dumpyos_f_search(ix, PreparedQuery(ix, q), 1, nbr, 0.3);
    });
}
BENCHMARK(BM_FuzzySearch)->Arg(5)->Arg(25)->Unit(benchmark::kMicrosecond);

void BM_ExactSearchEd(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0));
    run_queries(state, [k](const Index& ix, const std::vector<float>& q) {
        return exact_search(ix, PreparedQuery(ix, q), k);
    });
}
BENCHMARK(BM_ExactSearchEd)->Arg(1)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ExactSearchDtw(benchmark::State& state) {
    run_queries(state, [](const Index& ix, const std::vector<float>& q) {
        return exact_search(ix, PreparedQuery(ix, q, DistanceKind::dtw(0.1)), 1);
    });
}
BENCHMARK(BM_ExactSearchDtw)->Unit(benchmark::kMillisecond);

void BM_ParallelExactSearch(benchmark::State& state) {
    const auto workers = static_cast<unsigned>(state.range(0));
    run_queries(state, [workers](const Index& ix, const std::vector<float>& q) {
        return parallel_exact_search(ix, PreparedQuery(ix, q), 50, {8, workers});
    });
}
BENCHMARK(BM_ParallelExactSearch)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
