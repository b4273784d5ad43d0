#include <algorithm>
#include <cmath>
#include <deque>
#include <tuple>
#include <unordered_set>

#include "index_state.hpp"

namespace dumpy::detail {

namespace {

struct Candidate {
    double dist;
    SeriesId row;
    int segment;
    int fixed_bit;

    bool operator<(const Candidate& o) const {
        return std::tie(dist, row, segment) < std::tie(o.dist, o.row, o.segment);
    }
};

bool holds(const Node& pack, SeriesId row) {
    for (std::size_t i = 0; i < pack.slots.size(); ++i) {
        if (pack.slots[i] == row && !pack.deleted[i]) return true;
    }
    return false;
}

// Pack reached by a copy of `row` entering `start` across `segment`: splits on
// that segment follow `fixed_bit`, the others follow the row's own symbols.
NodeId fixed_descent(const std::vector<Node>& arena, NodeId start, std::span<const std::uint8_t> sax, int segment,
                     int fixed_bit) {
    NodeId id = start;
    while (arena[id].is_internal()) {
        const Node& n = arena[id];
        id = n.child(promote_isax_fixed(n.isax, sax, n.csl, segment, fixed_bit));
        if (id == kNoNode) return kNoNode;
    }
    return id;
}

void duplicate_level(std::vector<Node>& arena, NodeId pid, std::span<const SeriesId> rows, const SaxTable& sax,
                     const PaaTable& paa, const IndexConfig& cfg, const SaxAlphabet& alphabet, bool packs,
                     bool internals, std::vector<std::uint8_t>& copies) {
    const Node& parent = arena[pid];
    const int lambda = static_cast<int>(parent.csl.size());
    const auto buckets = bucket_rows(sax, rows, parent.isax, parent.csl);
    const auto children = parent.children;
    for (NodeId cid : children) {
        const bool is_pack = arena[cid].is_pack();
        if ((is_pack && !packs) || (!is_pack && !internals)) continue;
        const auto members = arena[cid].sids;
        std::vector<Candidate> cands;
        for (Sid s : members) {
            for (int k = 0; k < lambda; ++k) {
                const int pos = sid_bit_position(k, lambda);
                const Sid other = s ^ (Sid{1} << pos);
                if (parent.child(other) == kNoNode || std::binary_search(members.begin(), members.end(), other)) {
                    continue;
                }
                const int seg = parent.csl[k];
                const int depth = parent.isax.depth(seg) + 1;
                const std::uint32_t lower = static_cast<std::uint32_t>(parent.isax.code(seg)) << 1;
                const double bp = alphabet.range(lower, depth).hi;
                const int member_bit = static_cast<int>((s >> pos) & 1u);
                const double band = cfg.fuzzy * alphabet.finite_range(lower | member_bit, depth).width();
                for (const auto& [sid, row] : buckets.of(other)) {
                    const double d = std::abs(paa.row(row)[seg] - bp);
                    if (d < band) cands.push_back({d, row, seg, 1 - member_bit});
                }
            }
        }
        std::sort(cands.begin(), cands.end());
        std::unordered_set<SeriesId> seen;
        for (const auto& c : cands) {
            if (!seen.insert(c.row).second) continue;
            if (copies[c.row] >= cfg.max_replication) continue;
            const NodeId target = fixed_descent(arena, cid, sax.row(c.row), c.segment, c.fixed_bit);
            if (target == kNoNode) continue;
            Node& pk = arena[target];
            if (pk.live() >= cfg.th || holds(pk, c.row)) continue;
            pk.slots.push_back(c.row);
            pk.duplicate.push_back(true);
            pk.deleted.push_back(false);
            ++copies[c.row];
        }
    }
}

}  // namespace

void fuzzy_duplicate(std::vector<Node>& arena, const SaxTable& sax, const PaaTable& paa, const IndexConfig& cfg,
                     FuzzyPhase phase, std::vector<std::uint8_t>& copies) {
    if (!(cfg.fuzzy > 0.0)) return;
    if (paa.values.size() != sax.size() * static_cast<std::size_t>(sax.segments())) {
        throw InternalError("fuzzy_duplicate: PAA table does not match the SAX table");
    }
    const SaxAlphabet alphabet(cfg.bits);
    std::vector<SeriesId> all(sax.size());
    for (SeriesId i = 0; i < all.size(); ++i) all[i] = i;
    if (phase == FuzzyPhase::RootPacks) {
        duplicate_level(arena, kRootId, all, sax, paa, cfg, alphabet, true, false, copies);
        return;
    }
    duplicate_level(arena, kRootId, all, sax, paa, cfg, alphabet, false, true, copies);

    // breadth first over the remaining internal nodes; rows are the originals below
    std::deque<std::pair<NodeId, std::vector<SeriesId>>> queue;
    auto push_children = [&](NodeId pid, std::span<const SeriesId> rows) {
        const Node& p = arena[pid];
        const auto buckets = bucket_rows(sax, rows, p.isax, p.csl);
        for (NodeId c : p.children) {
            if (!arena[c].is_internal()) continue;
            std::vector<SeriesId> crow;
            for (const auto& e : buckets.of(arena[c].sids.front())) crow.push_back(e.second);
            queue.emplace_back(c, std::move(crow));
        }
    };
    push_children(kRootId, all);
    all.clear();
    all.shrink_to_fit();
    while (!queue.empty()) {
        auto [id, rows] = std::move(queue.front());
        queue.pop_front();
        duplicate_level(arena, id, rows, sax, paa, cfg, alphabet, true, false, copies);
        duplicate_level(arena, id, rows, sax, paa, cfg, alphabet, false, true, copies);
        push_children(id, rows);
    }
}

}  // namespace dumpy::detail
