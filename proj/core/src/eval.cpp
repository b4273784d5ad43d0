#include "dumpy/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dumpy/error.hpp"
#include "dumpy/io.hpp"
#include "dumpy/thread_pool.hpp"

namespace dumpy {

Answers brute_force_knn(const DatasetHandle& ds, const std::vector<std::vector<float>>& queries, std::size_t k,
                        DistanceKind dist, unsigned workers) {
    if (k == 0) throw InvalidArgument("k must be at least 1");
    for (const auto& q : queries) {
        if (q.size() != ds.n) throw InvalidArgument("query length does not match the dataset");
    }
    const std::size_t n = ds.n;
    const std::size_t window = dist.is_dtw() ? dist.window(n) : 0;
    std::vector<std::vector<float>> normalized(queries.size(), std::vector<float>(n));
    std::vector<Envelope> envelopes(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        normalize_into(queries[i], normalized[i]);
        if (dist.is_dtw()) envelopes[i] = make_envelope(normalized[i], window);
    }
    std::vector<KnnHeap> heaps(queries.size(), KnnHeap(k));
    ThreadPool pool(std::max(1u, workers));
    std::vector<float> norm;
    for_each_batch(ds, batch_series_for_bytes(n, 64ull << 20), [&](std::uint64_t first, std::span<const float> raw) {
        const std::size_t rows = raw.size() / n;
        norm.resize(raw.size());
        for (std::size_t r = 0; r < rows; ++r) {
            normalize_into(raw.subspan(r * n, n), std::span<float>(norm).subspan(r * n, n));
        }
        pool.parallel_for(queries.size(), [&](std::size_t qi) {
            KnnHeap& heap = heaps[qi];
            for (std::size_t r = 0; r < rows; ++r) {
                const std::span<const float> s(norm.data() + r * n, n);
                const double bound = heap.bound();
                double d;
                if (dist.is_dtw()) {
                    if (lb_keogh_sq(envelopes[qi], s, bound) > bound) continue;
                    d = dtw_sq(normalized[qi], s, window, bound);
                } else {
                    d = ed_sq(normalized[qi], s, bound);
                }
                if (d <= bound) heap.offer(d, first + r);
            }
        });
    });
    Answers out;
    out.reserve(heaps.size());
    for (const auto& h : heaps) out.push_back(h.sorted());
    return out;
}

std::uint64_t hash_dataset(const DatasetHandle& ds) {
    std::uint64_t h = fnv1a(std::as_bytes(std::span<const std::uint64_t>(&ds.count, 1)));
    for_each_batch(ds, batch_series_for_bytes(ds.n, 64ull << 20), [&](std::uint64_t, std::span<const float> raw) {
        h = fnv1a(std::as_bytes(raw), h);
    });
    return h;
}

std::uint64_t hash_queries(const std::vector<std::vector<float>>& queries) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& q : queries) h = fnv1a(std::as_bytes(std::span<const float>(q)), h);
    return h;
}

namespace {

void put_key(ByteWriter& w, const GroundTruthKey& key) {
    w.put(key.dataset_hash);
    w.put(key.query_hash);
    w.put(key.k);
    w.put<std::uint8_t>(key.dist.is_dtw() ? 1 : 0);
    w.put(key.dist.is_dtw() ? key.dist.window_ratio : 0.0);
}

GroundTruthKey normalized_key(GroundTruthKey key) {
    if (!key.dist.is_dtw()) key.dist = DistanceKind::ed();
    return key;
}

}  // namespace

void save_ground_truth(const std::filesystem::path& path, const GroundTruthKey& key, const Answers& answers) {
    ByteWriter w;
    w.put_magic("DGT1");
    put_key(w, key);
    w.put<std::uint64_t>(answers.size());
    for (const auto& a : answers) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(a.size()));
        for (const auto& nb : a) {
            w.put<std::uint64_t>(nb.ordinal);
            w.put<double>(nb.distance);
        }
    }
    write_file(path, w.bytes());
}

std::optional<Answers> load_ground_truth(const std::filesystem::path& path, const GroundTruthKey& key) {
    if (!std::filesystem::exists(path)) return std::nullopt;
    const auto bytes = read_file(path);
    ByteReader r(bytes, "ground truth " + path.string());
    r.expect_magic("DGT1");
    GroundTruthKey stored;
    stored.dataset_hash = r.get<std::uint64_t>();
    stored.query_hash = r.get<std::uint64_t>();
    stored.k = r.get<std::uint32_t>();
    const auto kind = r.get<std::uint8_t>();
    const auto ratio = r.get<double>();
    if (kind > 1) throw FormatError("ground truth: bad distance kind");
    stored.dist = kind == 1 ? DistanceKind{DistanceKind::Kind::DTW, ratio} : DistanceKind::ed();
    if (!(stored == normalized_key(key))) return std::nullopt;
    const auto count = r.get<std::uint64_t>();
    if (count > bytes.size()) throw FormatError("ground truth: implausible query count");
    Answers out(count);
    for (auto& a : out) {
        const auto m = r.get<std::uint32_t>();
        if (m > key.k) throw FormatError("ground truth: more neighbours than k");
        a.resize(m);
        for (auto& nb : a) {
            nb.ordinal = r.get<std::uint64_t>();
            nb.distance = r.get<double>();
        }
    }
    if (!r.at_end()) throw FormatError("ground truth: trailing bytes");
    return out;
}

Answers cached_ground_truth(const DatasetHandle& ds, const std::vector<std::vector<float>>& queries, std::size_t k,
                            DistanceKind dist, const std::filesystem::path& cache_dir, unsigned workers, bool* hit) {
    GroundTruthKey key{hash_dataset(ds), hash_queries(queries), static_cast<std::uint32_t>(k), dist};
    key = normalized_key(key);
    char name[96];
    std::snprintf(name, sizeof name, "gt_%016llx_%016llx_k%u_%s.bin", static_cast<unsigned long long>(key.dataset_hash),
                  static_cast<unsigned long long>(key.query_hash), key.k,
                  dist.is_dtw() ? ("dtw" + std::to_string(static_cast<int>(std::lround(dist.window_ratio * 1000))))
                                      .c_str()
                                : "ed");
    const auto path = cache_dir / name;
    if (auto cached = load_ground_truth(path, key)) {
        if (hit) *hit = true;
        return *cached;
    }
    if (hit) *hit = false;
    auto answers = brute_force_knn(ds, queries, k, dist, workers);
    std::filesystem::create_directories(cache_dir);
    save_ground_truth(path, key, answers);
    return answers;
}

double average_precision(std::span<const Neighbor> result, std::span<const Neighbor> truth, std::size_t k) {
    if (k == 0) throw InvalidArgument("k must be at least 1");
    if (truth.empty()) return result.empty() ? 1.0 : 0.0;
    const double limit = truth[std::min(k, truth.size()) - 1].distance + kTieTolerance;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, result.size()); ++i) {
        if (result[i].distance <= limit) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(std::min(k, truth.size()));
}

double map_score(const Answers& results, const Answers& truths, std::size_t k) {
    if (results.size() != truths.size()) throw InvalidArgument("map_score: query counts differ");
    if (results.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) sum += average_precision(results[i], truths[i], k);
    return sum / static_cast<double>(results.size());
}

ErrorRatio error_ratio(const Answers& results, const Answers& truths, std::size_t k) {
    if (results.size() != truths.size()) throw InvalidArgument("error_ratio: query counts differ");
    ErrorRatio out;
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t qi = 0; qi < results.size(); ++qi) {
        double sum = 0.0;
        std::size_t terms = 0;
        for (std::size_t i = 0; i < std::min(k, truths[qi].size()); ++i) {
            if (i >= results[qi].size() || truths[qi][i].distance == 0.0) {
                ++out.skipped;
                continue;
            }
            sum += results[qi][i].distance / truths[qi][i].distance;
            ++terms;
        }
        if (terms == 0) {
            out.per_query.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        out.per_query.push_back(sum / static_cast<double>(terms));
        total += out.per_query.back();
        ++used;
    }
    out.mean = used == 0 ? 1.0 : total / static_cast<double>(used);
    return out;
}

IndexStats index_stats(const Index& ix) {
    IndexStats s;
    std::uint64_t live = 0;
    for (const Node& n : ix.nodes()) {
        s.structure_bytes += sizeof(Node);
        if (n.kind == NodeKind::Free) continue;
        ++s.nodes;
        s.structure_bytes += n.isax.codes().capacity() * 2 + n.sids.capacity() * sizeof(Sid) + n.csl.capacity() +
                             n.routing.capacity() * sizeof(NodeId) + n.children.capacity() * sizeof(NodeId) +
                             n.slots.capacity() * sizeof(SeriesId) + (n.duplicate.capacity() + n.deleted.capacity()) / 8;
        if (n.is_internal()) {
            ++s.internal;
            continue;
        }
        ++s.leaves;
        s.height = std::max<std::uint32_t>(s.height, n.layer);
        if (n.oversized) ++s.oversized;
        live += n.live();
        for (std::size_t i = 0; i < n.used(); ++i) {
            if (!n.deleted[i] && n.duplicate[i]) ++s.duplicates;
        }
    }
    s.series = live - s.duplicates;
    if (s.leaves > 0) {
        s.fill_factor = static_cast<double>(live) / (static_cast<double>(s.leaves) * static_cast<double>(ix.config().th));
    }
    return s;
}

LatencySummary summarize_latency(std::vector<double> ms) {
    LatencySummary s;
    if (ms.empty()) return s;
    std::sort(ms.begin(), ms.end());
    auto rank = [&](double p) {
        const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(ms.size())));
        return ms[std::clamp<std::size_t>(idx, 1, ms.size()) - 1];
    };
    double sum = 0;
    for (double v : ms) sum += v;
    s.mean_ms = sum / static_cast<double>(ms.size());
    s.p50_ms = rank(0.50);
    s.p90_ms = rank(0.90);
    s.p99_ms = rank(0.99);
    s.max_ms = ms.back();
    return s;
}

std::vector<std::vector<float>> load_queries(const std::filesystem::path& path, std::size_t n) {
    const auto ds = open_dataset(path, n);
    return load_normalized(ds);
}

}  // namespace dumpy
