#include "dumpy/parallel_build.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <future>
#include <mutex>
#include <numeric>
#include <thread>

#include "dumpy/thread_pool.hpp"
#include "index_state.hpp"

namespace dumpy {

BuildPipelinePlan BuildPipelinePlan::uniform(unsigned workers) {
    BuildPipelinePlan p;
    p.sax_workers = p.subtree_workers = p.routing_workers = p.flush_workers = workers;
    return p;
}

void BuildPipelinePlan::validate() const {
    if (sax_workers == 0 || subtree_workers == 0 || routing_workers == 0 || flush_workers == 0) {
        throw InvalidArgument("pipeline plan: every worker count must be at least 1");
    }
    if (sbuffer_records == 0) throw InvalidArgument("pipeline plan: S-buffer capacity must be at least 1");
}

bool BuildPipelinePlan::serial() const {
    return sax_workers == 1 && subtree_workers == 1 && routing_workers == 1 && flush_workers == 1;
}

namespace {

using Clock = std::chrono::steady_clock;
using detail::IndexAccess;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

class Recorder {
public:
    explicit Recorder(PipelineReport& r) : r_(r), t0_(Clock::now()) {}

    void begin(int stage) {
        std::lock_guard lock(mu_);
        r_.events.push_back({seq_++, stage, true});
        r_.stages[stage - 1].start_seconds = seconds_since(t0_);
    }
    void end(int stage) {
        std::lock_guard lock(mu_);
        r_.events.push_back({seq_++, stage, false});
        auto& s = r_.stages[stage - 1];
        s.wall_seconds = seconds_since(t0_) - s.start_seconds;
    }
    void io(double s) { add(io_ns_, s); }
    void compute(double s) { add(cpu_ns_, s); }

    void finish() {
        r_.wall_seconds = seconds_since(t0_);
        r_.io_seconds = static_cast<double>(io_ns_.load()) * 1e-9;
        r_.compute_seconds = static_cast<double>(cpu_ns_.load()) * 1e-9;
    }

private:
    static void add(std::atomic<std::int64_t>& a, double s) { a += static_cast<std::int64_t>(s * 1e9); }

    PipelineReport& r_;
    Clock::time_point t0_;
    std::mutex mu_;
    std::uint64_t seq_ = 0;
    std::atomic<std::int64_t> io_ns_{0};
    std::atomic<std::int64_t> cpu_ns_{0};
};

template <typename Fn>
auto timed(Recorder& rec, bool io, Fn&& fn) {
    const auto t = Clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        io ? rec.io(seconds_since(t)) : rec.compute(seconds_since(t));
    } else {
        auto v = fn();
        io ? rec.io(seconds_since(t)) : rec.compute(seconds_since(t));
        return v;
    }
}

// Scans the dataset in batches through two raw buffers. With `overlap`, the
// next batch is read while `fn` works on the current one.
template <typename Fn>
std::uint64_t scan_double_buffered(const DatasetHandle& ds, std::uint64_t batch, bool overlap, Recorder& rec,
                                   Fn&& fn) {
    DatasetReader reader(ds);
    std::array<std::vector<float>, 2> buf;
    auto read = [&](std::uint64_t first, int which) {
        const std::uint64_t count = std::min(batch, ds.count - first);
        buf[which].resize(count * ds.n);
        timed(rec, true, [&] { reader.read(first, count, buf[which]); });
    };
    if (ds.count == 0) return 0;
    read(0, 0);
    int cur = 0;
    for (std::uint64_t first = 0; first < ds.count; first += batch) {
        const std::uint64_t next = first + batch;
        std::future<void> pending;
        if (next < ds.count) {
            if (overlap) pending = std::async(std::launch::async, read, next, 1 - cur);
        }
        fn(first, std::span<const float>(buf[cur]));
        if (next < ds.count) {
            if (overlap) pending.get();
            else read(next, 1 - cur);
        }
        cur = 1 - cur;
    }
    return ds.count * ds.series_bytes();
}

// Flush group: each worker owns the leaf files with index % workers == its id
// and keeps its own S-buffers.
class FlushGroup {
public:
    FlushGroup(std::vector<File>& files, const std::vector<Node>& arena, RecordLayout lay, unsigned workers,
               std::size_t chunk, std::uint64_t cap_bytes)
        : workers_(workers) {
        for (unsigned w = 0; w < workers; ++w) {
            writers_.push_back(std::make_unique<detail::LeafWriter>(files, arena, lay, chunk,
                                                                    std::max<std::uint64_t>(1, cap_bytes / workers)));
            traces_.emplace_back();
        }
        for (unsigned w = 0; w < workers; ++w) writers_[w]->set_trace(&traces_[w]);
    }

    [[nodiscard]] unsigned workers() const { return workers_; }
    detail::LeafWriter& writer(unsigned w) { return *writers_[w]; }

    void flush_all() {
        for (auto& w : writers_) w->flush_all();
    }

    [[nodiscard]] std::uint64_t bytes_written() const {
        std::uint64_t b = 0;
        for (const auto& w : writers_) b += w->bytes_written();
        return b;
    }

    void append_trace(const std::vector<Node>& arena, std::vector<FlushRecord>& out) const {
        for (const auto& t : traces_) {
            for (const auto& e : t) out.push_back({e.pack, arena[e.pack].extent.file, e.first_slot, e.records});
        }
    }

private:
    unsigned workers_;
    std::vector<std::unique_ptr<detail::LeafWriter>> writers_;
    std::vector<std::vector<detail::LeafWriter::FlushEvent>> traces_;
};

// Routed batch: encoded records in row order.
struct Routed {
    std::uint64_t first = 0;
    std::uint64_t rows = 0;
    std::vector<std::byte> records;
};

void route_batch(const Index::State& st, std::uint64_t first, std::span<const float> raw, ThreadPool* pool,
                 unsigned parts_hint, Routed& out) {
    const auto lay = st.layout();
    const std::size_t n = st.cfg.n;
    const std::size_t rb = lay.bytes();
    out.first = first;
    out.rows = raw.size() / n;
    out.records.resize(out.rows * rb);
    auto work = [&](std::uint64_t lo, std::uint64_t hi) {
        std::vector<float> z(n);
        for (std::uint64_t i = lo; i < hi; ++i) {
            normalize_into(raw.subspan(i * n, n), z);
            lay.encode(z, st.sax.row(first + i), first + i, std::span<std::byte>(out.records).subspan(i * rb, rb));
        }
    };
    if (pool == nullptr || parts_hint <= 1) {
        work(0, out.rows);
        return;
    }
    const std::uint64_t parts = std::min<std::uint64_t>(out.rows, parts_hint * 4ull);
    pool->parallel_for(parts, [&](std::size_t p) { work(out.rows * p / parts, out.rows * (p + 1) / parts); });
}

void flush_batch(const Routed& batch, const detail::SlotMap& slots, const std::vector<Node>& arena, FlushGroup& group,
                 ThreadPool* pool, std::size_t record_bytes) {
    const unsigned workers = group.workers();
    auto work = [&](unsigned w) {
        auto& writer = group.writer(w);
        for (std::uint64_t i = 0; i < batch.rows; ++i) {
            const auto rec = std::span<const std::byte>(batch.records).subspan(i * record_bytes, record_bytes);
            for (const auto& [pack, slot] : slots.of(batch.first + i)) {
                if (arena[pack].extent.file % workers == w) writer.put(pack, slot, rec);
            }
        }
    };
    if (pool == nullptr || workers == 1) {
        for (unsigned w = 0; w < workers; ++w) work(w);
        return;
    }
    pool->parallel_for(workers, [&](std::size_t w) { work(static_cast<unsigned>(w)); });
}

}  // namespace

Index parallel_build(const DatasetHandle& ds, const IndexConfig& cfg, const std::filesystem::path& dir,
                     const BuildPipelinePlan& plan, PipelineReport* report_out) {
    cfg.validate();
    plan.validate();
    if (ds.n != cfg.n) throw InvalidArgument("build: dataset length does not match the configuration");
    std::filesystem::create_directories(dir);
    PipelineReport report;
    Recorder rec(report);
    const bool overlap = !plan.serial();
    const std::uint64_t batch = plan.buffer_series ? plan.buffer_series : batch_series_for_bytes(ds.n, 16ull << 20);

    auto st = std::make_unique<Index::State>();
    st->cfg = cfg;
    st->dir = dir;
    st->alphabet.emplace(cfg.bits);
    auto& arena = st->nodes;
    const auto lay = st->layout();
    const std::size_t rb = lay.bytes();

    // Stage 1: SAX table (and PAA for fuzzy builds), then the root split
    rec.begin(1);
    PaaTable paa;
    const bool fuzzy = cfg.fuzzy > 0.0;
    st->sax = SaxTable(cfg.w, cfg.bits);
    st->sax.resize(ds.count);
    if (fuzzy) {
        paa.w = cfg.w;
        paa.values.assign(ds.count * cfg.w, 0.0);
    }
    {
        ThreadPool pool(plan.sax_workers);
        report.stages[0].read_bytes = scan_double_buffered(ds, batch, overlap, rec, [&](std::uint64_t first,
                                                                                       std::span<const float> raw) {
            timed(rec, false, [&] {
                const std::uint64_t count = raw.size() / ds.n;
                const std::uint64_t parts = std::min<std::uint64_t>(count, plan.sax_workers * 4ull);
                pool.parallel_for(parts, [&](std::size_t p) {
                    const std::uint64_t lo = count * p / parts;
                    const std::uint64_t hi = count * (p + 1) / parts;
                    std::span<double> paa_out;
                    if (fuzzy) paa_out = std::span<double>(paa.values).subspan((first + lo) * cfg.w, (hi - lo) * cfg.w);
                    summarize_rows(raw.subspan(lo * ds.n, (hi - lo) * ds.n), ds.n, cfg.w, cfg.bits,
                                   st->sax.mutable_rows(first + lo, hi - lo), paa_out);
                });
            });
        });
    }
    auto pending = timed(rec, false, [&] { return detail::build_first_layer(arena, st->sax, cfg).pending; });
    std::vector<std::uint8_t> copies(fuzzy ? st->sax.size() : 0, 1);
    if (fuzzy) {
        timed(rec, false, [&] {
            detail::fuzzy_duplicate(arena, st->sax, paa, cfg, detail::FuzzyPhase::RootPacks, copies);
            detail::sort_duplicates(arena);
        });
    }
    const auto root_files = detail::root_child_files(arena);
    const std::uint32_t file_count =
        1 + static_cast<std::uint32_t>(std::count_if(root_files.begin(), root_files.end(), [](auto f) { return f > 0; }));
    detail::layout_file(arena, 0);
    detail::open_leaf_files(*st, file_count, true);
    rec.end(1);

    // Stage 2 (first-layer packs, file 0) alongside stage 3 (subtrees)
    std::vector<std::vector<Node>> subtrees(pending.size());
    std::vector<FlushRecord> flushes;
    auto stage2 = [&] {
        rec.begin(2);
        const auto slots = detail::build_slot_map(arena, st->sax.size(), [&](NodeId id) {
            return arena[id].parent == kRootId;
        });
        FlushGroup group(st->files, arena, lay, 1, plan.sbuffer_records, batch * ds.series_bytes());
        Routed routed;
        report.stages[1].read_bytes = scan_double_buffered(ds, batch, overlap, rec, [&](std::uint64_t first,
                                                                                       std::span<const float> raw) {
            timed(rec, false, [&] { route_batch(*st, first, raw, nullptr, 1, routed); });
            timed(rec, true, [&] { flush_batch(routed, slots, arena, group, nullptr, rb); });
        });
        timed(rec, true, [&] { group.flush_all(); });
        report.stages[1].write_bytes = group.bytes_written();
        group.append_trace(arena, flushes);
        rec.end(2);
    };
    auto stage3 = [&] {
        rec.begin(3);
        ThreadPool pool(plan.subtree_workers);
        // largest subtrees first so that stragglers start early
        std::vector<std::size_t> order(pending.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return pending[a].second.size() > pending[b].second.size(); });
        pool.parallel_for(order.size(), [&](std::size_t i) {
            const std::size_t j = order[i];
            timed(rec, false, [&] {
                subtrees[j] = detail::build_subtree(arena[pending[j].first], std::move(pending[j].second), st->sax, cfg);
            });
        });
        rec.end(3);
    };
    if (overlap) {
        auto s2 = std::async(std::launch::async, stage2);
        stage3();
        s2.get();
    } else {
        stage2();
        stage3();
    }

    // Stage 4: assemble the tree, then write every remaining pack
    rec.begin(4);
    timed(rec, false, [&] {
        for (std::size_t i = 0; i < pending.size(); ++i) detail::splice(arena, pending[i].first, std::move(subtrees[i]));
        if (fuzzy) {
            detail::fuzzy_duplicate(arena, st->sax, paa, cfg, detail::FuzzyPhase::Rest, copies);
            detail::sort_duplicates(arena);
        }
        detail::recompute_counts(arena);
        for (std::uint32_t f = 1; f < file_count; ++f) detail::layout_file(arena, f);
    });
    paa = {};
    if (file_count > 1) {
        const auto slots = detail::build_slot_map(arena, st->sax.size(), [&](NodeId id) {
            return arena[id].extent.file != 0;
        });
        FlushGroup group(st->files, arena, lay, plan.flush_workers, plan.sbuffer_records, batch * ds.series_bytes());
        ThreadPool routers(plan.routing_workers);
        ThreadPool flushers(plan.flush_workers);
        std::array<Routed, 2> routed;
        int cur = 0;
        std::future<void> flushing;
        report.stages[3].read_bytes = scan_double_buffered(ds, batch, overlap, rec, [&](std::uint64_t first,
                                                                                       std::span<const float> raw) {
            timed(rec, false, [&] { route_batch(*st, first, raw, &routers, plan.routing_workers, routed[cur]); });
            if (flushing.valid()) flushing.get();
            auto job = [&, which = cur] {
                timed(rec, true, [&] { flush_batch(routed[which], slots, arena, group, &flushers, rb); });
            };
            if (overlap) flushing = std::async(std::launch::async, job);
            else job();
            cur = 1 - cur;
        });
        if (flushing.valid()) flushing.get();
        timed(rec, true, [&] { group.flush_all(); });
        report.stages[3].write_bytes = group.bytes_written();
        group.append_trace(arena, flushes);
    }
    rec.end(4);

    report.stages[0].name = "sax+first layer";
    report.stages[1].name = "first-layer packs";
    report.stages[2].name = "subtrees";
    report.stages[3].name = "remaining packs";
    report.flushes = std::move(flushes);
    Index ix = IndexAccess::make(std::move(st));
    ix.save();
    rec.finish();
    if (overlap && report.io_seconds > 0) {
        const double hidden = report.io_seconds + report.compute_seconds - report.wall_seconds;
        report.overlap_fraction = std::clamp(hidden / report.io_seconds, 0.0, 1.0);
    }
    if (report_out) *report_out = std::move(report);
    return ix;
}

std::string format_pipeline_report(const PipelineReport& r) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-20s %10s %10s %14s %14s\n", "stage", "start_s", "wall_s", "read_bytes",
                  "write_bytes");
    out += line;
    for (std::size_t i = 0; i < r.stages.size(); ++i) {
        const auto& s = r.stages[i];
        std::snprintf(line, sizeof line, "%zu %-18s %10.3f %10.3f %14llu %14llu\n", i + 1, s.name.c_str(),
                      s.start_seconds, s.wall_seconds, static_cast<unsigned long long>(s.read_bytes),
                      static_cast<unsigned long long>(s.write_bytes));
        out += line;
    }
    std::snprintf(line, sizeof line, "wall %.3f s, io %.3f s, compute %.3f s, overlap %.3f\n", r.wall_seconds,
                  r.io_seconds, r.compute_seconds, r.overlap_fraction);
    out += line;
    return out;
}

}  // namespace dumpy
