#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dumpy/audit.hpp"
#include "dumpy/dataset.hpp"
#include "dumpy/error.hpp"
#include "dumpy/eval.hpp"
#include "dumpy/index.hpp"
#include "dumpy/parallel_build.hpp"
#include "dumpy/sax_table.hpp"
#include "dumpy/search.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Line-delimited JSON sink; "-" is stdout, empty disables it.
class JsonLines {
public:
    explicit JsonLines(const std::string& target) {
        if (target.empty()) return;
        if (target == "-") {
            out_ = &std::cout;
            return;
        }
        file_ = std::make_unique<std::ofstream>(target);
        if (!*file_) throw dumpy::StorageError("cannot open " + target);
        out_ = file_.get();
    }

    void emit(const json& j) {
        if (out_ != nullptr) *out_ << j.dump() << '\n';
    }
    [[nodiscard]] bool to_stdout() const { return out_ == &std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* out_ = nullptr;
};

// Two-column table for human output.
void print_table(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.first.size());
    for (const auto& [k, v] : rows) std::printf("  %-*s  %s\n", static_cast<int>(width), k.c_str(), v.c_str());
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::vector<std::vector<float>> raw_queries(const fs::path& path, std::size_t n, std::size_t limit) {
    const auto ds = dumpy::open_dataset(path, n);
    dumpy::DatasetReader reader(ds);
    const std::uint64_t count = limit == 0 ? ds.count : std::min<std::uint64_t>(limit, ds.count);
    std::vector<std::vector<float>> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(reader.raw(i));
    return out;
}

dumpy::DistanceKind make_distance(const std::string& name, double window) {
    if (name == "ed") return dumpy::DistanceKind::ed();
    if (name == "dtw") return dumpy::DistanceKind::dtw(window);
    throw dumpy::InvalidArgument("unknown distance '" + name + "'");
}

json counters_json(const dumpy::SearchCounters& c) {
    return {{"packs_visited", c.packs_visited},
            {"series_scanned", c.series_scanned},
            {"bytes_read", c.bytes_read},
            {"lb_computations", c.lb_computations},
            {"distance_computations", c.distance_computations},
            {"packs_pruned", c.packs_pruned}};
}

json neighbors_json(const std::vector<dumpy::Neighbor>& v) {
    json a = json::array();
    for (const auto& nb : v) a.push_back({nb.ordinal, nb.distance});
    return a;
}

json stats_json(const dumpy::IndexStats& s) {
    return {{"leaves", s.leaves},         {"nodes", s.nodes},           {"internal", s.internal},
            {"height", s.height},         {"fill_factor", s.fill_factor}, {"oversized", s.oversized},
            {"series", s.series},         {"duplicates", s.duplicates}, {"structure_bytes", s.structure_bytes}};
}

void print_stats(const dumpy::IndexStats& s) {
    print_table({{"series", std::to_string(s.series)},
                 {"fuzzy copies", std::to_string(s.duplicates)},
                 {"leaves", std::to_string(s.leaves)},
                 {"internal nodes", std::to_string(s.internal)},
                 {"height", std::to_string(s.height)},
                 {"fill factor", fmt(s.fill_factor)},
                 {"oversized leaves", std::to_string(s.oversized)},
                 {"structure bytes", std::to_string(s.structure_bytes)}});
}

struct IndexOptions {
    dumpy::IndexConfig cfg;
    std::string dist = "ed";
};

void add_index_options(CLI::App* cmd, IndexOptions& o) {
    auto& c = o.cfg;
    cmd->add_option("--w", c.w, "segments")->capture_default_str();
    cmd->add_option("--bits", c.bits, "bits per SAX symbol")->capture_default_str();
    cmd->add_option("--th", c.th, "leaf capacity")->capture_default_str();
    cmd->add_option("--alpha", c.alpha, "weight of the balance term")->capture_default_str();
    cmd->add_option("--fill-low", c.fill_low)->capture_default_str();
    cmd->add_option("--fill-high", c.fill_high)->capture_default_str();
    cmd->add_option("--rho", c.rho, "leaf packing demotion budget")->capture_default_str();
    cmd->add_option("--fuzzy", c.fuzzy, "duplication band as a fraction of the interval width")
        ->capture_default_str();
    cmd->add_option("--max-replication", c.max_replication)->capture_default_str();
    cmd->add_option("--distance", o.dist, "default distance recorded in the config")
        ->check(CLI::IsMember({"ed", "dtw"}))
        ->capture_default_str();
    cmd->add_option("--window", c.distance.window_ratio, "DTW window ratio")->capture_default_str();
    cmd->add_flag("--binary-split", c.binary_split, "one segment per split, no packing");
    cmd->add_flag("--exhaustive-split", c.exhaustive_split, "score every segment subset size");
    cmd->add_option("--repack-after", c.repack_after)->capture_default_str();
}

struct QueryOptions {
    std::string index;
    std::string queries;
    std::size_t limit = 0;
    std::string mode = "exact";
    std::size_t k = 1;
    std::size_t nbr = 1;
    double f = 0.3;
    std::string dist = "ed";
    double window = 0.1;
    std::size_t eta = 8;
    unsigned workers = 2;
    std::string jsonl;
};

void add_query_options(CLI::App* cmd, QueryOptions& o) {
    cmd->add_option("-i,--index", o.index, "index directory")->envname("DUMPY_DIR")->required();
    cmd->add_option("-q,--queries", o.queries, "query file (dataset format)")->required();
    cmd->add_option("--limit", o.limit, "use only the first N queries");
    cmd->add_option("--mode", o.mode)
        ->check(CLI::IsMember({"approx", "extended", "fuzzy", "exact", "parallel-exact"}))
        ->capture_default_str();
    cmd->add_option("-k,--k", o.k)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--nbr", o.nbr, "leaf budget for extended and fuzzy search")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--f", o.f, "fuzzy search band")->capture_default_str();
    cmd->add_option("--dist", o.dist)->check(CLI::IsMember({"ed", "dtw"}))->capture_default_str();
    cmd->add_option("--window", o.window, "DTW window ratio")->capture_default_str();
    cmd->add_option("--eta", o.eta, "leaves per buffer in parallel exact search")->capture_default_str();
    cmd->add_option("--workers", o.workers, "parallel exact search threads")->capture_default_str();
    cmd->add_option("--jsonl", o.jsonl, "write line-delimited JSON here ('-' for stdout)");
}

struct RunResult {
    std::vector<dumpy::QueryResult> results;
    std::vector<double> ms;
};

RunResult run_queries(const dumpy::Index& ix, const std::vector<std::vector<float>>& queries,
                      const QueryOptions& o) {
    dumpy::SearchRequest req;
    req.mode = dumpy::parse_search_mode(o.mode);
    req.k = o.k;
    req.nbr = o.nbr;
    req.f = o.f;
    req.parallel = {o.eta, o.workers};
    const auto dist = make_distance(o.dist, o.window);
    RunResult r;
    for (const auto& q : queries) {
        const auto t0 = Clock::now();
        const dumpy::PreparedQuery pq(ix, q, dist);
        r.results.push_back(dumpy::search(ix, pq, req));
        r.ms.push_back(seconds_since(t0) * 1e3);
    }
    return r;
}

json latency_json(const dumpy::LatencySummary& l) {
    return {{"mean", l.mean_ms}, {"p50", l.p50_ms}, {"p90", l.p90_ms}, {"p99", l.p99_ms}, {"max", l.max_ms}};
}

void print_latency(const dumpy::LatencySummary& l) {
    print_table({{"latency mean ms", fmt(l.mean_ms, 3)},
                 {"latency p50 ms", fmt(l.p50_ms, 3)},
                 {"latency p90 ms", fmt(l.p90_ms, 3)},
                 {"latency p99 ms", fmt(l.p99_ms, 3)},
                 {"latency max ms", fmt(l.max_ms, 3)}});
}

void print_mean_counters(const dumpy::SearchCounters& total, std::size_t q) {
    const double d = q == 0 ? 1.0 : static_cast<double>(q);
    print_table({{"leaves visited / query", fmt(total.packs_visited / d, 2)},
                 {"series scanned / query", fmt(total.series_scanned / d, 1)},
                 {"bytes read / query", fmt(total.bytes_read / d, 0)},
                 {"lower bounds / query", fmt(total.lb_computations / d, 1)},
                 {"distances / query", fmt(total.distance_computations / d, 1)},
                 {"leaves pruned / query", fmt(total.packs_pruned / d, 1)}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dumpy: a compact adaptive index for data series"};
    app.set_config("--config", "", "read options from a TOML/INI file");
    app.require_subcommand(1);
    app.set_version_flag("--version", "dumpy 0.3.0");

    // gen
    std::string gen_out, gen_noisy_from;
    std::uint64_t gen_count = 10000, gen_seed = 1;
    std::size_t gen_len = 256;
    std::vector<double> gen_snr{10, 20, 30};
    auto* gen = app.add_subcommand("gen", "generate a random-walk dataset or noisy queries");
    gen->add_option("-o,--out", gen_out)->required();
    gen->add_option("-c,--count", gen_count)->capture_default_str();
    gen->add_option("-n,--length", gen_len)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--noisy-from", gen_noisy_from, "derive queries from this dataset");
    gen->add_option("--snr", gen_snr, "noise levels in dB, cycled")->delimiter(',');

    // sax
    std::string sax_data, sax_out;
    int sax_w = 16, sax_bits = 8;
    unsigned sax_workers = 1;
    auto* sax = app.add_subcommand("sax", "compute the SAX table of a dataset");
    sax->add_option("-d,--data", sax_data)->required();
    sax->add_option("-o,--out", sax_out)->required();
    sax->add_option("--w", sax_w)->capture_default_str();
    sax->add_option("--bits", sax_bits)->capture_default_str();
    sax->add_option("--workers", sax_workers)->capture_default_str();

    // build
    IndexOptions bo;
    std::string build_data, build_index, build_jsonl;
    bool build_serial = false;
    unsigned build_workers = 5;
    std::uint64_t build_buffer = 0;
    auto* build = app.add_subcommand("build", "build an index");
    build->add_option("-d,--data", build_data)->required();
    build->add_option("-i,--index", build_index, "index directory")->envname("DUMPY_DIR")->required();
    add_index_options(build, bo);
    auto* serial_flag = build->add_flag("--serial", build_serial, "single-threaded reference build");
    build->add_flag("--parallel", "pipelined build (default)")->excludes(serial_flag);
    build->add_option("--workers", build_workers, "threads per pipeline stage")->capture_default_str();
    build->add_option("--buffer-series", build_buffer, "rows per raw buffer, 0 for 16 MB");
    build->add_option("--jsonl", build_jsonl, "write line-delimited JSON here ('-' for stdout)");

    // query
    QueryOptions qo;
    std::size_t query_show = 5;
    auto* query = app.add_subcommand("query", "answer kNN queries");
    add_query_options(query, qo);
    query->add_option("--show", query_show, "neighbors printed per query")->capture_default_str();

    // eval
    QueryOptions eo;
    std::string eval_data, eval_cache;
    unsigned eval_gt_workers = 1;
    auto* eval = app.add_subcommand("eval", "accuracy and cost against brute-force ground truth");
    add_query_options(eval, eo);
    eval->add_option("-d,--data", eval_data, "the indexed dataset")->required();
    eval->add_option("--gt-cache", eval_cache, "ground-truth cache directory (default <index>/gt)");
    eval->add_option("--gt-workers", eval_gt_workers)->capture_default_str();

    // stats
    std::string stats_index, stats_jsonl;
    bool stats_audit = false;
    auto* stats = app.add_subcommand("stats", "index shape and occupancy");
    stats->add_option("-i,--index", stats_index)->envname("DUMPY_DIR")->required();
    stats->add_flag("--audit", stats_audit, "also run the consistency checks");
    stats->add_option("--jsonl", stats_jsonl);

    // oracle
    std::string or_data, or_queries, or_out, or_dist = "ed";
    std::size_t or_k = 1, or_limit = 0;
    double or_window = 0.1;
    unsigned or_workers = 1;
    auto* oracle = app.add_subcommand("oracle", "brute-force kNN ground truth");
    oracle->add_option("-d,--data", or_data)->required();
    oracle->add_option("-q,--queries", or_queries)->required();
    oracle->add_option("-o,--out", or_out, "write a ground-truth file");
    oracle->add_option("-k,--k", or_k)->check(CLI::PositiveNumber)->capture_default_str();
    oracle->add_option("--limit", or_limit);
    oracle->add_option("--dist", or_dist)->check(CLI::IsMember({"ed", "dtw"}))->capture_default_str();
    oracle->add_option("--window", or_window)->capture_default_str();
    oracle->add_option("--workers", or_workers)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            if (gen_noisy_from.empty()) {
                const auto ds = dumpy::gen_random_walk(gen_count, gen_len, gen_seed, gen_out);
                std::printf("wrote %llu random-walk series of length %zu to %s\n",
                            static_cast<unsigned long long>(ds.count), ds.n, gen_out.c_str());
            } else {
                const auto base = dumpy::open_dataset(gen_noisy_from);
                const auto ds = dumpy::gen_noisy_queries(base, gen_count, gen_snr, gen_seed, gen_out);
                std::printf("wrote %llu noisy queries of length %zu to %s\n",
                            static_cast<unsigned long long>(ds.count), ds.n, gen_out.c_str());
            }
        } else if (*sax) {
            const auto ds = dumpy::open_dataset(sax_data);
            const auto t0 = Clock::now();
            dumpy::SaxTableOptions opts;
            opts.workers = sax_workers;
            const auto table = dumpy::build_sax_table(ds, sax_w, sax_bits, opts);
            table.save(sax_out);
            std::printf("%llu words (w=%d, bits=%d) in %.3f s -> %s\n",
                        static_cast<unsigned long long>(table.size()), sax_w, sax_bits, seconds_since(t0),
                        sax_out.c_str());
        } else if (*build) {
            const auto ds = dumpy::open_dataset(build_data);
            auto cfg = bo.cfg;
            cfg.n = ds.n;
            cfg.distance = make_distance(bo.dist, cfg.distance.window_ratio);
            const auto t0 = Clock::now();
            dumpy::PipelineReport report;
            dumpy::BuildPipelinePlan plan = build_serial ? dumpy::BuildPipelinePlan::uniform(1)
                                                         : dumpy::BuildPipelinePlan::uniform(build_workers);
            plan.buffer_series = build_buffer;
            auto ix = dumpy::parallel_build(ds, cfg, build_index, plan, &report);
            const double secs = seconds_since(t0);
            const auto s = dumpy::index_stats(ix);
            std::printf("built %s in %.3f s\n", build_index.c_str(), secs);
            print_stats(s);
            std::printf("%s", dumpy::format_pipeline_report(report).c_str());
            JsonLines out(build_jsonl);
            json stages = json::array();
            for (const auto& st : report.stages) {
                stages.push_back({{"name", st.name},
                                  {"start", st.start_seconds},
                                  {"wall", st.wall_seconds},
                                  {"read_bytes", st.read_bytes},
                                  {"write_bytes", st.write_bytes}});
            }
            out.emit({{"event", "build"},
                      {"index", build_index},
                      {"seconds", secs},
                      {"serial", plan.serial()},
                      {"overlap", report.overlap_fraction},
                      {"stages", stages},
                      {"stats", stats_json(s)}});
        } else if (*query) {
            const auto ix = dumpy::Index::open(qo.index);
            const auto qs = raw_queries(qo.queries, ix.config().n, qo.limit);
            const auto run = run_queries(ix, qs, qo);
            JsonLines out(qo.jsonl);
            dumpy::SearchCounters total;
            for (std::size_t i = 0; i < qs.size(); ++i) {
                const auto& r = run.results[i];
                total += r.counters;
                out.emit({{"event", "query"},
                          {"query", i},
                          {"ms", run.ms[i]},
                          {"neighbors", neighbors_json(r.neighbors)},
                          {"counters", counters_json(r.counters)}});
                if (out.to_stdout()) continue;
                std::printf("q%-5zu %8.3f ms  leaves %-5llu", i, run.ms[i],
                            static_cast<unsigned long long>(r.counters.packs_visited));
                for (std::size_t j = 0; j < std::min(query_show, r.neighbors.size()); ++j) {
                    std::printf("  %llu:%.4f", static_cast<unsigned long long>(r.neighbors[j].ordinal),
                                r.neighbors[j].distance);
                }
                std::printf("\n");
            }
            const auto lat = dumpy::summarize_latency(run.ms);
            out.emit({{"event", "summary"},
                      {"mode", qo.mode},
                      {"queries", qs.size()},
                      {"latency_ms", latency_json(lat)},
                      {"counters", counters_json(total)}});
            if (!out.to_stdout()) {
                print_latency(lat);
                print_mean_counters(total, qs.size());
            }
        } else if (*eval) {
            const auto ix = dumpy::Index::open(eo.index);
            const auto ds = dumpy::open_dataset(eval_data, ix.config().n);
            const auto qs = raw_queries(eo.queries, ix.config().n, eo.limit);
            const fs::path cache = eval_cache.empty() ? fs::path(eo.index) / "gt" : fs::path(eval_cache);
            bool hit = false;
            const auto t0 = Clock::now();
            const auto truth = dumpy::cached_ground_truth(ds, qs, eo.k, make_distance(eo.dist, eo.window), cache,
                                                          eval_gt_workers, &hit);
            const double gt_secs = seconds_since(t0);
            const auto run = run_queries(ix, qs, eo);
            dumpy::Answers answers;
            dumpy::SearchCounters total;
            for (const auto& r : run.results) {
                answers.push_back(r.neighbors);
                total += r.counters;
            }
            const double map = dumpy::map_score(answers, truth, eo.k);
            const auto er = dumpy::error_ratio(answers, truth, eo.k);
            const auto lat = dumpy::summarize_latency(run.ms);
            JsonLines out(eo.jsonl);
            for (std::size_t i = 0; i < qs.size(); ++i) {
                json e = {{"event", "eval_query"},
                          {"query", i},
                          {"ms", run.ms[i]},
                          {"ap", dumpy::average_precision(answers[i], truth[i], eo.k)},
                          {"counters", counters_json(run.results[i].counters)}};
                if (std::isnan(er.per_query[i])) {
                    e["error_ratio"] = nullptr;
                } else {
                    e["error_ratio"] = er.per_query[i];
                }
                out.emit(e);
            }
            out.emit({{"event", "eval"},
                      {"mode", eo.mode},
                      {"k", eo.k},
                      {"nbr", eo.nbr},
                      {"dist", eo.dist},
                      {"queries", qs.size()},
                      {"map", map},
                      {"error_ratio", er.mean},
                      {"error_ratio_skipped", er.skipped},
                      {"latency_ms", latency_json(lat)},
                      {"counters", counters_json(total)},
                      {"ground_truth_cached", hit}});
            if (!out.to_stdout()) {
                print_table({{"mode", eo.mode},
                             {"queries", std::to_string(qs.size())},
                             {"k", std::to_string(eo.k)},
                             {"MAP", fmt(map)},
                             {"error ratio", fmt(er.mean)},
                             {"ranks skipped", std::to_string(er.skipped)},
                             {"ground truth", hit ? "cached" : "computed in " + fmt(gt_secs, 3) + " s"}});
                print_latency(lat);
                print_mean_counters(total, qs.size());
            }
        } else if (*stats) {
            const auto ix = dumpy::Index::open(stats_index);
            const auto s = dumpy::index_stats(ix);
            print_stats(s);
            json j = {{"event", "stats"}, {"index", stats_index}, {"stats", stats_json(s)}};
            int rc = 0;
            if (stats_audit) {
                auto rep = dumpy::audit_structure(ix);
                rep.merge(dumpy::audit_membership(ix));
                for (const auto& p : rep.problems) std::printf("  problem: %s\n", p.c_str());
                std::printf("  audit: %s (%llu checks)\n", rep.ok() ? "ok" : "FAILED",
                            static_cast<unsigned long long>(rep.checked));
                j["audit_ok"] = rep.ok();
                j["audit_problems"] = rep.problems;
                rc = rep.ok() ? 0 : 2;
            }
            JsonLines(stats_jsonl).emit(j);
            return rc;
        } else if (*oracle) {
            const auto ds = dumpy::open_dataset(or_data);
            const auto qs = raw_queries(or_queries, ds.n, or_limit);
            const auto dist = make_distance(or_dist, or_window);
            const auto t0 = Clock::now();
            const auto truth = dumpy::brute_force_knn(ds, qs, or_k, dist, or_workers);
            const double secs = seconds_since(t0);
            if (!or_out.empty()) {
                dumpy::GroundTruthKey key{dumpy::hash_dataset(ds), dumpy::hash_queries(qs),
                                          static_cast<std::uint32_t>(or_k), dist};
                dumpy::save_ground_truth(or_out, key, truth);
            }
            for (std::size_t i = 0; i < truth.size(); ++i) {
                std::printf("q%-5zu", i);
                for (const auto& nb : truth[i]) {
                    std::printf("  %llu:%.4f", static_cast<unsigned long long>(nb.ordinal), nb.distance);
                }
                std::printf("\n");
            }
            std::printf("%zu queries in %.3f s\n", truth.size(), secs);
        }
    } catch (const dumpy::Error& e) {
        std::fprintf(stderr, "dumpy: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "dumpy: unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
