#include <algorithm>
#include <unordered_map>

#include "dumpy/packing.hpp"
#include "index_state.hpp"

namespace dumpy {

namespace {

using detail::IndexAccess;

// Raw records keyed by ordinal, gathered before a pack is restructured.
using RecordMap = std::unordered_map<SeriesId, std::vector<std::byte>>;

class Updater {
public:
    explicit Updater(Index::State& st) : st_(st), lay_(st.layout()), rec_(lay_.bytes()) {}

    Extent allocate(std::uint32_t file, std::uint64_t capacity) {
        auto& fl = st_.free_lists[file];
        for (auto it = fl.begin(); it != fl.end(); ++it) {
            if (it->second < capacity) continue;
            const Extent e{file, it->first, capacity};
            it->first += capacity;
            it->second -= capacity;
            if (it->second == 0) fl.erase(it);
            return e;
        }
        const Extent e{file, st_.file_end[file], capacity};
        st_.file_end[file] += capacity;
        return e;
    }

    void release(const Extent& e) {
        if (e.capacity == 0) return;
        auto& fl = st_.free_lists[e.file];
        auto it = std::lower_bound(fl.begin(), fl.end(), std::pair<std::uint64_t, std::uint64_t>{e.offset, 0});
        it = fl.insert(it, {e.offset, e.capacity});
        if (auto next = it + 1; next != fl.end() && it->first + it->second == next->first) {
            it->second += next->second;
            fl.erase(next);
        }
        if (it != fl.begin()) {
            auto prev = it - 1;
            if (prev->first + prev->second == it->first) {
                prev->second += it->second;
                fl.erase(it);
            }
        }
    }

    std::vector<std::byte> read_raw(const Node& p) const {
        std::vector<std::byte> raw(p.used() * rec_);
        if (!raw.empty()) st_.files[p.extent.file].read_at(p.extent.offset * rec_, raw);
        return raw;
    }

    void write_slot(const Node& p, std::uint64_t slot, std::span<const std::byte> record) {
        st_.files[p.extent.file].write_at((p.extent.offset + slot) * rec_, record);
    }

    // Live originals of a pack, optionally filtered by ordinal.
    template <typename Pred>
    void collect(const Node& p, RecordMap& out, Pred keep) const {
        const auto raw = read_raw(p);
        for (std::size_t i = 0; i < p.used(); ++i) {
            if (p.deleted[i] || p.duplicate[i] || !keep(p.slots[i])) continue;
            out.emplace(p.slots[i], std::vector<std::byte>(raw.begin() + i * rec_, raw.begin() + (i + 1) * rec_));
        }
    }

    void relocate(NodeId id, std::uint64_t capacity) {
        Node& p = st_.nodes[id];
        const auto raw = read_raw(p);
        release(p.extent);
        p.extent = allocate(p.extent.file, capacity);
        if (!raw.empty()) st_.files[p.extent.file].write_at(p.extent.offset * rec_, raw);
        ++st_.stats.relocations;
    }

    void put(NodeId id, SeriesId ordinal, std::span<const std::byte> record) {
        Node& p = st_.nodes[id];
        const auto hole = std::find(p.deleted.begin(), p.deleted.end(), true);
        if (hole != p.deleted.end()) {
            const auto slot = static_cast<std::uint64_t>(hole - p.deleted.begin());
            p.slots[slot] = ordinal;
            p.deleted[slot] = false;
            p.duplicate[slot] = false;
            write_slot(p, slot, record);
            return;
        }
        if (p.used() == p.extent.capacity) relocate(id, std::max<std::uint64_t>(1, 2 * p.extent.capacity));
        Node& q = st_.nodes[id];
        q.slots.push_back(ordinal);
        q.deleted.push_back(false);
        q.duplicate.push_back(false);
        write_slot(q, q.used() - 1, record);
    }

    // Gives every pack below `top` a fresh extent and writes its records.
    void write_subtree(NodeId top, std::uint32_t file, const RecordMap& records) {
        std::vector<NodeId> stack{top};
        while (!stack.empty()) {
            const NodeId id = stack.back();
            stack.pop_back();
            Node& n = st_.nodes[id];
            if (n.is_internal()) {
                for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
                continue;
            }
            n.extent = allocate(file, n.used());
            std::vector<std::byte> buf;
            buf.reserve(n.used() * rec_);
            for (SeriesId o : n.slots) {
                const auto& r = records.at(o);
                buf.insert(buf.end(), r.begin(), r.end());
            }
            if (!buf.empty()) st_.files[file].write_at(n.extent.offset * rec_, buf);
        }
    }

    std::uint32_t file_of(NodeId id) const {
        if (id == kRootId) return 0;
        std::vector<NodeId> stack{id};
        while (!stack.empty()) {
            const Node& n = st_.nodes[stack.back()];
            stack.pop_back();
            if (n.is_pack()) return n.extent.file;
            for (NodeId c : n.children) stack.push_back(c);
        }
        return 0;
    }

    NodeId new_child(NodeId parent, Sid sid) {
        const Node& p = st_.nodes[parent];
        Node c;
        c.parent = parent;
        c.layer = static_cast<std::uint16_t>(p.layer + 1);
        c.isax = p.isax.child(p.csl, sid);
        c.sids = {sid};
        c.split_lambda = static_cast<std::uint8_t>(p.csl.size());
        const auto id = static_cast<NodeId>(st_.nodes.size());
        st_.nodes.push_back(std::move(c));
        st_.nodes[parent].routing[sid] = id;
        st_.nodes[parent].children.push_back(id);
        return id;
    }

    void remove_node(NodeId id) {
        Node& n = st_.nodes[id];
        if (n.is_pack()) release(n.extent);
        const NodeId parent = n.parent;
        if (parent != kNoNode) {
            Node& p = st_.nodes[parent];
            for (Sid s : n.sids) {
                if (p.routing[s] == id) p.routing[s] = kNoNode;
            }
            std::erase(p.children, id);
        }
        n = Node{};
        n.kind = NodeKind::Free;
        if (parent != kNoNode && parent != kRootId && st_.nodes[parent].children.empty()) remove_node(parent);
    }

    // Grows `id` (already labelled) over the given records and lays it out.
    void grow_into(NodeId id, RecordMap records, std::uint32_t file) {
        std::vector<SeriesId> rows;
        rows.reserve(records.size());
        for (const auto& [o, r] : records) rows.push_back(o);
        std::sort(rows.begin(), rows.end());
        detail::grow(st_.nodes, id, std::move(rows), st_.sax, st_.cfg);
        write_subtree(id, file, records);
    }

    void split_pack(NodeId id, SeriesId ordinal, std::span<const std::byte> record) {
        RecordMap records;
        collect(st_.nodes[id], records, [](SeriesId) { return true; });
        records.emplace(ordinal, std::vector<std::byte>(record.begin(), record.end()));
        const std::uint32_t file = st_.nodes[id].extent.file;
        release(st_.nodes[id].extent);
        Node& n = st_.nodes[id];
        n.extent = {};
        n.slots.clear();
        n.duplicate.clear();
        n.deleted.clear();
        grow_into(id, std::move(records), file);
        ++st_.stats.splits;
    }

    void extract(NodeId id, SeriesId ordinal, std::span<const std::byte> record) {
        const NodeId parent = st_.nodes[id].parent;
        const Node& p = st_.nodes[parent];
        const Sid sid = promote_isax(p.isax, st_.sax.row(ordinal), p.csl);
        const IsaxWord pisax = p.isax;
        const auto pcsl = p.csl;
        RecordMap records;
        collect(st_.nodes[id], records, [&](SeriesId o) { return promote_isax(pisax, st_.sax.row(o), pcsl) == sid; });
        records.emplace(ordinal, std::vector<std::byte>(record.begin(), record.end()));
        {
            Node& pk = st_.nodes[id];
            for (std::size_t i = 0; i < pk.used(); ++i) {
                if (!pk.deleted[i] && records.count(pk.slots[i])) pk.deleted[i] = true;
            }
            std::erase(pk.sids, sid);
        }
        const std::uint32_t file = file_of(id);
        const NodeId child = new_child(parent, sid);
        grow_into(child, std::move(records), file);
        if (st_.nodes[id].live() == 0) remove_node(id);
        ++st_.stats.extractions;
        if (++st_.nodes[parent].extractions % st_.cfg.repack_after == 0) repack(parent);
    }

    // Redoes the packing of a parent's small children.
    void repack(NodeId parent) {
        const Node& p = st_.nodes[parent];
        if (st_.cfg.binary_split) return;
        std::vector<NodeId> old;
        for (NodeId c : p.children) {
            if (st_.nodes[c].is_pack() && !st_.nodes[c].oversized) old.push_back(c);
        }
        if (old.size() < 2) return;
        const IsaxWord pisax = p.isax;
        const auto pcsl = p.csl;
        RecordMap records;
        std::unordered_map<Sid, std::vector<SeriesId>> by_sid;
        for (NodeId c : old) collect(st_.nodes[c], records, [](SeriesId) { return true; });
        for (const auto& [o, r] : records) by_sid[promote_isax(pisax, st_.sax.row(o), pcsl)].push_back(o);
        const std::uint32_t file = file_of(old.front());
        for (NodeId c : old) {
            release(st_.nodes[c].extent);
            for (Sid s : st_.nodes[c].sids) st_.nodes[parent].routing[s] = kNoNode;
            std::erase(st_.nodes[parent].children, c);
            st_.nodes[c] = Node{};
            st_.nodes[c].kind = NodeKind::Free;
        }
        std::vector<PackCandidate> cands;
        for (const auto& [sid, rows] : by_sid) cands.push_back({sid, rows.size()});
        std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.sid < b.sid; });
        const int lambda = static_cast<int>(pcsl.size());
        for (auto& pk : pack_leaves(cands, st_.cfg.rho, st_.cfg.th, lambda)) {
            std::sort(pk.members.begin(), pk.members.end());
            std::vector<SeriesId> rows;
            for (Sid m : pk.members) rows.insert(rows.end(), by_sid[m].begin(), by_sid[m].end());
            Node c;
            c.parent = parent;
            c.layer = static_cast<std::uint16_t>(st_.nodes[parent].layer + 1);
            c.isax = pisax.child_demoted(pcsl, pk.members.front(), pk.demoted_mask);
            c.sids = pk.members;
            c.split_lambda = static_cast<std::uint8_t>(lambda);
            detail::make_leaf(c, std::move(rows), false);
            c.demotion_bits = static_cast<std::uint8_t>(pk.demotion_bits());
            const auto id = static_cast<NodeId>(st_.nodes.size());
            for (Sid m : c.sids) st_.nodes[parent].routing[m] = id;
            st_.nodes.push_back(std::move(c));
            st_.nodes[parent].children.push_back(id);
            write_subtree(id, file, records);
        }
        ++st_.stats.repacks;
    }

    void place(SeriesId ordinal, std::span<const std::byte> record) {
        NodeId id = kRootId;
        const auto sax = st_.sax.row(ordinal);
        while (st_.nodes[id].is_internal()) {
            const Node& n = st_.nodes[id];
            const Sid sid = promote_isax(n.isax, sax, n.csl);
            const NodeId next = n.child(sid);
            if (next == kNoNode) {
                const std::uint32_t file = file_of(id);
                const NodeId leaf = new_child(id, sid);
                detail::make_leaf(st_.nodes[leaf], {}, false);
                st_.nodes[leaf].extent = allocate(file, 1);
                put(leaf, ordinal, record);
                return;
            }
            id = next;
        }
        const Node& pk = st_.nodes[id];
        if (pk.live() < st_.cfg.th || pk.oversized) {
            put(id, ordinal, record);
        } else if (pk.sids.size() == 1) {
            split_pack(id, ordinal, record);
        } else {
            extract(id, ordinal, record);
        }
    }

private:
    Index::State& st_;
    RecordLayout lay_;
    std::size_t rec_;
};

}  // namespace

SeriesId Index::insert(std::span<const float> series) {
    std::unique_lock lock(s_->mu);
    State& st = *s_;
    if (series.size() != st.cfg.n) throw InvalidArgument("insert: series length does not match the index");
    const auto z = znormalize(series);
    const auto summary = summarize(std::span<const float>(z), st.cfg.w, st.cfg.cardinality());
    const SeriesId ordinal = st.sax.append(summary.sax);
    const auto lay = st.layout();
    std::vector<std::byte> rec(lay.bytes());
    lay.encode(z, summary.sax, ordinal, rec);
    Updater(st).place(ordinal, rec);
    ++st.stats.inserts;
    detail::recompute_counts(st.nodes);
    return ordinal;
}

bool Index::erase(SeriesId ordinal) {
    std::unique_lock lock(s_->mu);
    State& st = *s_;
    if (ordinal >= st.sax.size()) return false;
    const NodeId target = route(st.sax.row(ordinal));
    if (target == kNoNode) return false;
    Node& pk = st.nodes[target];
    bool found = false;
    for (std::size_t i = 0; i < pk.used(); ++i) {
        if (pk.slots[i] == ordinal && !pk.deleted[i] && !pk.duplicate[i]) {
            pk.deleted[i] = true;
            found = true;
            break;
        }
    }
    if (!found) return false;
    std::vector<NodeId> touched{target};
    for (NodeId id = 0; id < static_cast<NodeId>(st.nodes.size()); ++id) {
        Node& n = st.nodes[id];
        if (!n.is_pack()) continue;
        for (std::size_t i = 0; i < n.used(); ++i) {
            if (n.duplicate[i] && !n.deleted[i] && n.slots[i] == ordinal) {
                n.deleted[i] = true;
                touched.push_back(id);
            }
        }
    }
    Updater up(st);
    for (NodeId id : touched) {
        if (st.nodes[id].is_pack() && st.nodes[id].live() == 0) up.remove_node(id);
    }
    ++st.stats.deletes;
    detail::recompute_counts(st.nodes);
    return true;
}

}  // namespace dumpy
