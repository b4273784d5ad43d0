#include "dumpy/audit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "dumpy/packing.hpp"

namespace dumpy {

namespace {

template <typename... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

// Chain of node ids from the root down to `id`.
std::vector<NodeId> ancestry(const Index& ix, NodeId id) {
    std::vector<NodeId> chain;
    for (NodeId c = id; c != kNoNode; c = ix.node(c).parent) chain.push_back(c);
    std::reverse(chain.begin(), chain.end());
    return chain;
}

std::vector<NodeId> route_path(const Index& ix, std::span<const std::uint8_t> sax) {
    std::vector<NodeId> path{kRootId};
    while (ix.node(path.back()).is_internal()) {
        const Node& n = ix.node(path.back());
        const NodeId c = n.child(promote_isax(n.isax, sax, n.csl));
        if (c == kNoNode) break;
        path.push_back(c);
    }
    return path;
}

NodeId fixed_descent(const Index& ix, NodeId start, std::span<const std::uint8_t> sax, int seg, int bit) {
    NodeId id = start;
    while (id != kNoNode && ix.node(id).is_internal()) {
        const Node& n = ix.node(id);
        id = n.child(promote_isax_fixed(n.isax, sax, n.csl, seg, bit));
    }
    return id;
}

}  // namespace

void AuditReport::add(std::string p) {
    if (problems.size() < 64) problems.push_back(std::move(p));
    else if (problems.size() == 64) problems.emplace_back("...");
}

void AuditReport::merge(const AuditReport& o) {
    for (const auto& p : o.problems) add(p);
    checked += o.checked;
}

bool is_prefix_of(const IsaxWord& a, const IsaxWord& b) {
    if (a.segments() != b.segments()) return false;
    for (int s = 0; s < a.segments(); ++s) {
        if (a.depth(s) > b.depth(s)) return false;
        if ((b.code(s) >> (b.depth(s) - a.depth(s))) != a.code(s)) return false;
    }
    return true;
}

AuditReport audit_structure(const Index& ix) {
    AuditReport r;
    const auto& nodes = ix.nodes();
    const auto& cfg = ix.config();
    if (nodes.empty() || !nodes[0].is_internal()) {
        r.add("root is missing or not internal");
        return r;
    }
    std::vector<std::uint64_t> size(nodes.size(), 0);
    std::vector<std::uint32_t> leaves(nodes.size(), 0);
    for (NodeId id = static_cast<NodeId>(nodes.size()) - 1; id >= 0; --id) {
        const Node& n = nodes[id];
        if (n.kind == NodeKind::Free) continue;
        ++r.checked;
        if (id != kRootId) {
            if (n.parent == kNoNode || n.parent >= id) {
                r.add(cat("node ", id, ": bad parent ", n.parent));
                continue;
            }
            const Node& p = nodes[n.parent];
            if (!p.is_internal()) r.add(cat("node ", id, ": parent is not internal"));
            if (std::count(p.children.begin(), p.children.end(), id) != 1) {
                r.add(cat("node ", id, ": not listed once among its parent's children"));
            }
            if (n.layer != p.layer + 1) r.add(cat("node ", id, ": layer ", n.layer));
            if (n.sids.empty() || !std::is_sorted(n.sids.begin(), n.sids.end())) {
                r.add(cat("node ", id, ": member sids empty or unsorted"));
            }
            if (!is_prefix_of(p.isax, n.isax)) r.add(cat("node ", id, ": word does not refine its parent"));
            for (Sid s : n.sids) {
                if (p.child(s) != id) r.add(cat("node ", id, ": parent does not route sid ", s, " here"));
                if (!is_prefix_of(n.isax, p.isax.child(p.csl, s))) {
                    r.add(cat("node ", id, ": word does not cover member sid ", s));
                }
            }
            if (n.is_internal() && n.sids.size() != 1) r.add(cat("node ", id, ": internal node with several sids"));
        }
        if (n.is_internal()) {
            if (n.csl.empty() || n.routing.size() != (std::size_t{1} << n.csl.size())) {
                r.add(cat("node ", id, ": routing table size"));
            }
            if (!std::is_sorted(n.csl.begin(), n.csl.end())) r.add(cat("node ", id, ": csl unsorted"));
            for (Sid s = 0; s < n.routing.size(); ++s) {
                const NodeId c = n.routing[s];
                if (c == kNoNode) continue;
                if (c <= id || c >= static_cast<NodeId>(nodes.size()) || nodes[c].parent != id) {
                    r.add(cat("node ", id, ": routing entry ", s, " points to ", c));
                } else if (!std::binary_search(nodes[c].sids.begin(), nodes[c].sids.end(), s)) {
                    r.add(cat("node ", id, ": routes sid ", s, " to a child without it"));
                }
            }
            for (NodeId c : n.children) {
                if (c > id && c < static_cast<NodeId>(nodes.size())) {
                    size[id] += size[c];
                    leaves[id] += leaves[c];
                }
            }
        } else {
            if (n.duplicate.size() != n.used() || n.deleted.size() != n.used()) {
                r.add(cat("pack ", id, ": bitmap length mismatch"));
                continue;
            }
            if (n.used() > n.extent.capacity) r.add(cat("pack ", id, ": more slots than capacity"));
            if (n.extent.file >= ix.file_count()) r.add(cat("pack ", id, ": bad file"));
            if (n.live() > cfg.th && !n.oversized) r.add(cat("pack ", id, ": ", n.live(), " records exceed th"));
            if (id != kRootId && !cfg.binary_split) {
                const int lambda = static_cast<int>(nodes[n.parent].csl.size());
                if (n.demotion_bits > demotion_budget(cfg.rho, lambda)) {
                    r.add(cat("pack ", id, ": demotion bits over budget"));
                }
            }
            size[id] = n.live();
            leaves[id] = 1;
        }
        if (size[id] != n.size) r.add(cat("node ", id, ": cached size ", n.size, " != ", size[id]));
        if (leaves[id] != n.leaf_count) r.add(cat("node ", id, ": cached leaf count"));
    }
    // extents must not overlap
    std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> ext(ix.file_count());
    for (const Node& n : nodes) {
        if (n.is_pack() && n.extent.file < ext.size() && n.extent.capacity > 0) {
            ext[n.extent.file].emplace_back(n.extent.offset, n.extent.capacity);
        }
    }
    for (std::size_t f = 0; f < ext.size(); ++f) {
        std::sort(ext[f].begin(), ext[f].end());
        for (std::size_t i = 1; i < ext[f].size(); ++i) {
            if (ext[f][i - 1].first + ext[f][i - 1].second > ext[f][i].first) {
                r.add(cat("file ", f, ": overlapping extents at ", ext[f][i].first));
            }
        }
    }
    return r;
}

AuditReport audit_membership(const Index& ix, const std::optional<std::vector<SeriesId>>& expected) {
    AuditReport r;
    const auto& nodes = ix.nodes();
    std::vector<NodeId> home(ix.sax().size(), kNoNode);
    for (NodeId id = 0; id < static_cast<NodeId>(nodes.size()); ++id) {
        const Node& n = nodes[id];
        if (!n.is_pack()) continue;
        const PackData data = ix.read_pack(id);
        std::unordered_map<SeriesId, int> live_rows;
        for (std::size_t i = 0; i < n.used(); ++i) {
            if (data.ordinals[i] != n.slots[i]) r.add(cat("pack ", id, " slot ", i, ": record ordinal mismatch"));
            if (n.deleted[i]) continue;
            const SeriesId o = n.slots[i];
            if (o >= home.size()) {
                r.add(cat("pack ", id, ": ordinal ", o, " out of range"));
                continue;
            }
            if (++live_rows[o] > 1) r.add(cat("pack ", id, ": holds ordinal ", o, " twice"));
            if (n.duplicate[i]) continue;
            ++r.checked;
            if (home[o] != kNoNode) r.add(cat("ordinal ", o, ": original in packs ", home[o], " and ", id));
            home[o] = id;
            if (!n.isax.covers(ix.sax().row(o))) r.add(cat("ordinal ", o, ": pack ", id, " word does not cover it"));
            if (ix.route(ix.sax().row(o)) != id) r.add(cat("ordinal ", o, ": routing does not reach pack ", id));
        }
    }
    if (expected) {
        std::vector<bool> want(home.size(), false);
        for (SeriesId o : *expected) {
            if (o >= home.size()) {
                r.add(cat("expected ordinal ", o, " out of range"));
                continue;
            }
            want[o] = true;
            if (home[o] == kNoNode) r.add(cat("ordinal ", o, ": missing"));
        }
        for (SeriesId o = 0; o < home.size(); ++o) {
            if (home[o] != kNoNode && !want[o]) r.add(cat("ordinal ", o, ": present but not expected"));
        }
    }
    return r;
}

AuditReport audit_fuzzy(const Index& ix, const PaaTable& paa) {
    AuditReport r;
    const auto& cfg = ix.config();
    const auto& alphabet = ix.alphabet();
    const auto& nodes = ix.nodes();
    std::vector<std::uint32_t> copies(ix.sax().size(), 0);
    for (NodeId id = 0; id < static_cast<NodeId>(nodes.size()); ++id) {
        const Node& pk = nodes[id];
        if (!pk.is_pack()) continue;
        for (std::size_t i = 0; i < pk.used(); ++i) {
            if (pk.deleted[i]) continue;
            const SeriesId o = pk.slots[i];
            ++copies[o];
            if (!pk.duplicate[i]) continue;
            ++r.checked;
            const auto sax = ix.sax().row(o);
            const auto own = route_path(ix, sax);
            const auto other = ancestry(ix, id);
            std::size_t k = 0;
            while (k < own.size() && k < other.size() && own[k] == other[k]) ++k;
            if (k == 0 || k >= other.size() || k >= own.size()) {
                r.add(cat("copy of ", o, " in pack ", id, ": no divergence point"));
                continue;
            }
            const Node& a = nodes[own[k - 1]];
            const Node& target = nodes[other[k]];
            const int lambda = static_cast<int>(a.csl.size());
            const Sid sid = promote_isax(a.isax, sax, a.csl);
            bool justified = false;
            for (Sid s : target.sids) {
                const Sid diff = s ^ sid;
                if (std::popcount(diff) != 1) continue;
                const int pos = std::countr_zero(diff);
                const int kk = lambda - 1 - pos;
                const int seg = a.csl[kk];
                const int depth = a.isax.depth(seg) + 1;
                const std::uint32_t lower = static_cast<std::uint32_t>(a.isax.code(seg)) << 1;
                const int member_bit = static_cast<int>((s >> pos) & 1u);
                const double bp = alphabet.range(lower, depth).hi;
                const double band = cfg.fuzzy * alphabet.finite_range(lower | member_bit, depth).width();
                if (std::abs(paa.row(o)[seg] - bp) >= band) continue;
                if (fixed_descent(ix, other[k], sax, seg, 1 - member_bit) != id) continue;
                justified = true;
                break;
            }
            if (!justified) r.add(cat("copy of ", o, " in pack ", id, ": not within the band of a single boundary"));
        }
    }
    for (SeriesId o = 0; o < copies.size(); ++o) {
        if (copies[o] > static_cast<std::uint32_t>(cfg.max_replication)) r.add(cat("ordinal ", o, ": ", copies[o], " copies"));
    }
    return r;
}

}  // namespace dumpy
