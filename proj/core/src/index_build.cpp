#include <algorithm>
#include <cstdio>
#include <numeric>

#include "dumpy/packing.hpp"
#include "dumpy/split.hpp"
#include "index_state.hpp"

namespace dumpy {

std::uint64_t Node::live() const {
    return static_cast<std::uint64_t>(std::count(deleted.begin(), deleted.end(), false));
}

void RecordLayout::encode(std::span<const float> values, std::span<const std::uint8_t> sax, SeriesId ordinal,
                          std::span<std::byte> out) const {
    std::memcpy(out.data(), values.data(), n * sizeof(float));
    std::memcpy(out.data() + n * sizeof(float), sax.data(), static_cast<std::size_t>(w));
    std::memcpy(out.data() + n * sizeof(float) + w, &ordinal, sizeof(ordinal));
}

namespace detail {

std::filesystem::path leaf_path(const std::filesystem::path& dir, std::uint32_t file) {
    char name[32];
    std::snprintf(name, sizeof(name), "leaf_%05u.bin", file);
    return dir / name;
}
std::filesystem::path tree_path(const std::filesystem::path& dir) { return dir / "tree.bin"; }
std::filesystem::path sax_path(const std::filesystem::path& dir) { return dir / "sax.bin"; }
std::filesystem::path config_path(const std::filesystem::path& dir) { return dir / "config.json"; }

std::span<const std::pair<Sid, SeriesId>> SidRows::of(Sid sid) const {
    auto lo = std::lower_bound(entries.begin(), entries.end(), std::pair<Sid, SeriesId>{sid, 0});
    auto hi = lo;
    while (hi != entries.end() && hi->first == sid) ++hi;
    return {lo, hi};
}

std::vector<std::pair<Sid, std::uint64_t>> SidRows::counts() const {
    std::vector<std::pair<Sid, std::uint64_t>> out;
    for (const auto& [sid, row] : entries) {
        if (out.empty() || out.back().first != sid) out.push_back({sid, 0});
        ++out.back().second;
    }
    return out;
}

SidRows bucket_rows(const SaxTable& sax, std::span<const SeriesId> rows, const IsaxWord& isax,
                    std::span<const std::uint8_t> csl) {
    SidRows out;
    out.entries.reserve(rows.size());
    for (SeriesId r : rows) out.entries.push_back({promote_isax(isax, sax.row(r), csl), r});
    std::sort(out.entries.begin(), out.entries.end());
    return out;
}

void make_leaf(Node& node, std::vector<SeriesId> rows, bool oversized) {
    std::sort(rows.begin(), rows.end());
    node.kind = NodeKind::Pack;
    node.oversized = oversized;
    node.csl.clear();
    node.routing.clear();
    node.children.clear();
    node.demotion_bits = 0;
    node.size = rows.size();
    node.leaf_count = 1;
    node.duplicate.assign(rows.size(), false);
    node.deleted.assign(rows.size(), false);
    node.slots = std::move(rows);
}

SplitResult split_node(std::vector<Node>& arena, NodeId id, std::span<const std::uint8_t> csl,
                       std::span<const SeriesId> rows, const SaxTable& sax, const IndexConfig& cfg) {
    const IsaxWord isax = arena[id].isax;
    const auto layer = static_cast<std::uint16_t>(arena[id].layer + 1);
    const int lambda = static_cast<int>(csl.size());
    const auto buckets = bucket_rows(sax, rows, isax, csl);
    {
        Node& n = arena[id];
        n.kind = NodeKind::Internal;
        n.oversized = false;
        n.csl.assign(csl.begin(), csl.end());
        n.routing.assign(std::size_t{1} << lambda, kNoNode);
        n.children.clear();
        n.slots.clear();
        n.duplicate.clear();
        n.deleted.clear();
        n.extent = {};
        n.size = rows.size();
    }
    SplitResult res;
    std::vector<PackCandidate> small;
    for (const auto& [sid, count] : buckets.counts()) {
        if (count <= cfg.th) {
            small.push_back({sid, count});
            continue;
        }
        Node c;
        c.kind = NodeKind::Internal;
        c.parent = id;
        c.layer = layer;
        c.isax = isax.child(csl, sid);
        c.sids = {sid};
        c.size = count;
        c.split_lambda = static_cast<std::uint8_t>(lambda);
        const auto cid = static_cast<NodeId>(arena.size());
        std::vector<SeriesId> crow;
        crow.reserve(count);
        for (const auto& e : buckets.of(sid)) crow.push_back(e.second);
        arena.push_back(std::move(c));
        arena[id].children.push_back(cid);
        arena[id].routing[sid] = cid;
        res.pending.push_back({cid, std::move(crow)});
    }
    std::vector<PackAssignment> packs;
    if (cfg.binary_split) {
        for (const auto& c : small) packs.push_back({{c.sid}, 0, c.size});
    } else {
        packs = pack_leaves(small, cfg.rho, cfg.th, lambda);
    }
    for (auto& pk : packs) {
        std::sort(pk.members.begin(), pk.members.end());
        std::vector<SeriesId> prow;
        prow.reserve(pk.size);
        for (Sid m : pk.members)
            for (const auto& e : buckets.of(m)) prow.push_back(e.second);
        Node c;
        c.parent = id;
        c.layer = layer;
        c.isax = isax.child_demoted(csl, pk.members.front(), pk.demoted_mask);
        c.sids = pk.members;
        c.split_lambda = static_cast<std::uint8_t>(lambda);
        make_leaf(c, std::move(prow), false);
        c.demotion_bits = static_cast<std::uint8_t>(pk.demotion_bits());
        const auto cid = static_cast<NodeId>(arena.size());
        for (Sid m : c.sids) arena[id].routing[m] = cid;
        arena.push_back(std::move(c));
        arena[id].children.push_back(cid);
    }
    return res;
}

namespace {

bool identical_words(const SaxTable& sax, std::span<const SeriesId> rows) {
    const auto first = sax.row(rows.front());
    return std::all_of(rows.begin(), rows.end(), [&](SeriesId r) { return std::ranges::equal(sax.row(r), first); });
}

}  // namespace

void grow(std::vector<Node>& arena, NodeId id, std::vector<SeriesId> rows, const SaxTable& sax,
          const IndexConfig& cfg) {
    if (rows.size() <= cfg.th) {
        make_leaf(arena[id], std::move(rows), false);
        return;
    }
    if (identical_words(sax, rows)) {
        make_leaf(arena[id], std::move(rows), true);
        return;
    }
    SplitPlan plan;
    try {
        plan = cfg.binary_split ? choose_binary_split(sax, rows, arena[id].isax, cfg.split_params())
                                : choose_split_plan(sax, rows, arena[id].isax, cfg.split_params());
    } catch (const CannotSplit&) {
        make_leaf(arena[id], std::move(rows), true);
        return;
    }
    auto res = split_node(arena, id, plan.csl, rows, sax, cfg);
    rows.clear();
    rows.shrink_to_fit();
    for (auto& [cid, crow] : res.pending) grow(arena, cid, std::move(crow), sax, cfg);
}

SplitResult build_first_layer(std::vector<Node>& arena, const SaxTable& sax, const IndexConfig& cfg) {
    arena.clear();
    Node root;
    root.kind = NodeKind::Internal;
    root.isax = IsaxWord(cfg.w, cfg.bits);
    arena.push_back(std::move(root));
    std::vector<SeriesId> rows(sax.size());
    std::iota(rows.begin(), rows.end(), SeriesId{0});
    std::vector<std::uint8_t> csl(cfg.w);
    std::iota(csl.begin(), csl.end(), std::uint8_t{0});
    return split_node(arena, kRootId, csl, rows, sax, cfg);
}

std::vector<Node> build_subtree(const Node& proto, std::vector<SeriesId> rows, const SaxTable& sax,
                                const IndexConfig& cfg) {
    std::vector<Node> local{proto};
    local[0].parent = kNoNode;
    grow(local, 0, std::move(rows), sax, cfg);
    return local;
}

void splice(std::vector<Node>& arena, NodeId at, std::vector<Node> subtree) {
    const auto base = static_cast<NodeId>(arena.size());
    auto map = [&](NodeId local) { return local == kNoNode ? kNoNode : (local == 0 ? at : base + local - 1); };
    for (auto& n : subtree) {
        for (auto& c : n.children) c = map(c);
        for (auto& r : n.routing) r = map(r);
        n.parent = map(n.parent);
    }
    subtree[0].parent = arena[at].parent;
    arena[at] = std::move(subtree[0]);
    arena.reserve(arena.size() + subtree.size() - 1);
    for (std::size_t i = 1; i < subtree.size(); ++i) arena.push_back(std::move(subtree[i]));
}

void recompute_counts(std::vector<Node>& arena) {
    for (auto i = static_cast<NodeId>(arena.size()) - 1; i >= 0; --i) {
        Node& n = arena[i];
        if (n.kind == NodeKind::Pack) {
            n.size = n.live();
            n.leaf_count = 1;
        } else if (n.kind == NodeKind::Internal) {
            n.size = 0;
            n.leaf_count = 0;
            for (NodeId c : n.children) {
                n.size += arena[c].size;
                n.leaf_count += arena[c].leaf_count;
            }
        }
    }
}

std::vector<std::uint32_t> root_child_files(const std::vector<Node>& arena) {
    std::vector<std::uint32_t> out;
    std::uint32_t next = 1;
    for (NodeId c : arena[kRootId].children) out.push_back(arena[c].is_pack() ? 0 : next++);
    return out;
}

namespace {

void collect_packs(const std::vector<Node>& arena, NodeId id, std::vector<NodeId>& out) {
    if (arena[id].is_pack()) {
        out.push_back(id);
        return;
    }
    for (NodeId c : arena[id].children) collect_packs(arena, c, out);
}

}  // namespace

std::vector<NodeId> packs_of_file(const std::vector<Node>& arena, std::uint32_t file) {
    const auto files = root_child_files(arena);
    const auto& kids = arena[kRootId].children;
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < kids.size(); ++i) {
        if (files[i] != file) continue;
        if (file == 0) {
            out.push_back(kids[i]);
        } else {
            collect_packs(arena, kids[i], out);
            std::sort(out.begin(), out.end());
        }
    }
    return out;
}

std::uint64_t layout_file(std::vector<Node>& arena, std::uint32_t file) {
    std::uint64_t off = 0;
    for (NodeId p : packs_of_file(arena, file)) {
        arena[p].extent = {file, off, arena[p].used()};
        off += arena[p].used();
    }
    return off;
}

void sort_duplicates(std::vector<Node>& arena) {
    for (auto& n : arena) {
        if (!n.is_pack()) continue;
        const auto first_dup = std::find(n.duplicate.begin(), n.duplicate.end(), true) - n.duplicate.begin();
        std::sort(n.slots.begin() + first_dup, n.slots.end());
    }
}

SlotMap build_slot_map(const std::vector<Node>& arena, std::uint64_t count,
                       const std::function<bool(NodeId)>& keep) {
    SlotMap m;
    m.offsets.assign(count + 1, 0);
    for (NodeId id = 0; id < static_cast<NodeId>(arena.size()); ++id) {
        if (!arena[id].is_pack() || !keep(id)) continue;
        for (SeriesId o : arena[id].slots) ++m.offsets[o + 1];
    }
    std::partial_sum(m.offsets.begin(), m.offsets.end(), m.offsets.begin());
    m.entries.resize(m.offsets.back());
    std::vector<std::uint64_t> fill(m.offsets.begin(), m.offsets.end() - 1);
    for (NodeId id = 0; id < static_cast<NodeId>(arena.size()); ++id) {
        if (!arena[id].is_pack() || !keep(id)) continue;
        const auto& slots = arena[id].slots;
        for (std::uint64_t s = 0; s < slots.size(); ++s) m.entries[fill[slots[s]]++] = {id, s};
    }
    return m;
}

LeafWriter::LeafWriter(std::vector<File>& files, const std::vector<Node>& arena, RecordLayout layout,
                       std::size_t chunk_records, std::uint64_t cap_bytes)
    : files_(files), arena_(arena), layout_(layout), chunk_(std::max<std::size_t>(1, chunk_records)),
      cap_bytes_(cap_bytes), buffers_(arena.size()) {}

void LeafWriter::put(NodeId pack, std::uint64_t slot, std::span<const std::byte> record) {
    Buffer& b = buffers_[pack];
    if (b.records > 0 && slot != b.first_slot + b.records) flush(pack);
    if (b.records == 0) {
        b.first_slot = slot;
        dirty_.push_back(pack);
    }
    b.data.insert(b.data.end(), record.begin(), record.end());
    ++b.records;
    staged_bytes_ += record.size();
    if (b.records >= chunk_) {
        flush(pack);
    } else if (staged_bytes_ > cap_bytes_) {
        flush_all();
    }
}

void LeafWriter::flush(NodeId pack) {
    Buffer& b = buffers_[pack];
    if (b.records == 0) return;
    const Extent& e = arena_[pack].extent;
    if (b.first_slot + b.records > e.capacity) throw InternalError("LeafWriter: write past the pack extent");
    files_[e.file].write_at((e.offset + b.first_slot) * layout_.bytes(), b.data);
    if (trace_) trace_->push_back({pack, b.first_slot, b.records});
    bytes_written_ += b.data.size();
    staged_bytes_ -= b.data.size();
    b.data.clear();
    b.records = 0;
}

void LeafWriter::flush_all() {
    for (NodeId p : dirty_) flush(p);
    dirty_.clear();
}

void open_leaf_files(Index::State& st, std::uint32_t file_count, bool create) {
    st.files.clear();
    for (std::uint32_t f = 0; f < file_count; ++f) {
        st.files.emplace_back(leaf_path(st.dir, f), create ? File::Mode::Create : File::Mode::ReadWrite);
    }
    // free ranges are the gaps between live extents
    st.free_lists.assign(file_count, {});
    st.file_end.assign(file_count, 0);
    std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> used(file_count);
    for (const auto& n : st.nodes) {
        if (!n.is_pack()) continue;
        if (n.extent.file >= file_count) throw FormatError("tree: extent refers to a missing leaf file");
        used[n.extent.file].push_back({n.extent.offset, n.extent.capacity});
    }
    for (std::uint32_t f = 0; f < file_count; ++f) {
        auto& u = used[f];
        std::sort(u.begin(), u.end());
        std::uint64_t at = 0;
        for (const auto& [off, cap] : u) {
            if (off < at) throw FormatError("tree: overlapping extents");
            if (off > at) st.free_lists[f].push_back({at, off - at});
            at = off + cap;
        }
        st.file_end[f] = at;
    }
}

}  // namespace detail

using detail::IndexAccess;

Index::Index() : s_(std::make_unique<State>()) {}
Index::~Index() = default;
Index::Index(Index&&) noexcept = default;
Index& Index::operator=(Index&&) noexcept = default;

const IndexConfig& Index::config() const { return s_->cfg; }
const std::filesystem::path& Index::dir() const { return s_->dir; }
const SaxTable& Index::sax() const { return s_->sax; }
const SaxAlphabet& Index::alphabet() const { return *s_->alphabet; }
const std::vector<Node>& Index::nodes() const { return s_->nodes; }
const Node& Index::node(NodeId id) const { return s_->nodes.at(static_cast<std::size_t>(id)); }
RecordLayout Index::layout() const { return s_->layout(); }
std::uint32_t Index::file_count() const { return static_cast<std::uint32_t>(s_->files.size()); }
const UpdateStats& Index::update_stats() const { return s_->stats; }

std::shared_lock<std::shared_mutex> Index::read_lock() const { return std::shared_lock(s_->mu); }

std::vector<NodeId> Index::packs() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < static_cast<NodeId>(s_->nodes.size()); ++i) {
        if (s_->nodes[i].is_pack()) out.push_back(i);
    }
    return out;
}

std::uint64_t Index::series_count() const {
    std::uint64_t c = 0;
    for (const auto& n : s_->nodes) {
        if (!n.is_pack()) continue;
        for (std::size_t i = 0; i < n.slots.size(); ++i) c += !n.deleted[i] && !n.duplicate[i];
    }
    return c;
}

PackData Index::read_pack(NodeId id) const {
    const Node& p = node(id);
    if (!p.is_pack()) throw InvalidArgument("read_pack: node is not a pack");
    const auto lay = layout();
    const std::size_t rec = lay.bytes();
    std::vector<std::byte> raw(p.used() * rec);
    if (!raw.empty()) s_->files.at(p.extent.file).read_at(p.extent.offset * rec, raw);
    PackData out;
    out.n = lay.n;
    out.values.resize(p.used() * lay.n);
    out.ordinals.resize(p.used());
    for (std::size_t i = 0; i < p.used(); ++i) {
        const std::byte* r = raw.data() + i * rec;
        std::memcpy(out.values.data() + i * lay.n, r, lay.n * sizeof(float));
        std::memcpy(&out.ordinals[i], r + lay.n * sizeof(float) + lay.w, sizeof(SeriesId));
    }
    return out;
}

NodeId Index::route(std::span<const std::uint8_t> sax) const {
    NodeId id = kRootId;
    while (s_->nodes[id].is_internal()) {
        const Node& n = s_->nodes[id];
        id = n.child(promote_isax(n.isax, sax, n.csl));
        if (id == kNoNode) return kNoNode;
    }
    return id;
}

bool Index::contains(SeriesId ordinal) const {
    if (ordinal >= s_->sax.size()) return false;
    const NodeId p = route(s_->sax.row(ordinal));
    if (p == kNoNode) return false;
    const Node& n = s_->nodes[p];
    for (std::size_t i = 0; i < n.slots.size(); ++i) {
        if (n.slots[i] == ordinal && !n.deleted[i] && !n.duplicate[i]) return true;
    }
    return false;
}

Index Index::build(const DatasetHandle& ds, const IndexConfig& cfg, const std::filesystem::path& dir,
                   const BuildOptions& opts) {
    cfg.validate();
    if (ds.n != cfg.n) throw InvalidArgument("build: dataset length does not match the configuration");
    std::filesystem::create_directories(dir);
    auto st = std::make_unique<State>();
    st->cfg = cfg;
    st->dir = dir;
    st->alphabet.emplace(cfg.bits);

    PaaTable paa;
    st->sax = build_sax_table(ds, cfg.w, cfg.bits,
                              {.batch_series = opts.batch_series,
                               .workers = opts.workers,
                               .paa = cfg.fuzzy > 0.0 ? &paa : nullptr});

    auto& arena = st->nodes;
    auto pending = detail::build_first_layer(arena, st->sax, cfg).pending;
    for (auto& [cid, rows] : pending) {
        detail::splice(arena, cid, detail::build_subtree(arena[cid], std::move(rows), st->sax, cfg));
    }
    if (cfg.fuzzy > 0.0) {
        std::vector<std::uint8_t> copies(st->sax.size(), 1);
        detail::fuzzy_duplicate(arena, st->sax, paa, cfg, detail::FuzzyPhase::RootPacks, copies);
        detail::fuzzy_duplicate(arena, st->sax, paa, cfg, detail::FuzzyPhase::Rest, copies);
        detail::sort_duplicates(arena);
    }
    detail::recompute_counts(arena);

    const auto files = detail::root_child_files(arena);
    const std::uint32_t file_count = 1 + static_cast<std::uint32_t>(std::count_if(
                                             files.begin(), files.end(), [](std::uint32_t f) { return f > 0; }));
    for (std::uint32_t f = 0; f < file_count; ++f) detail::layout_file(arena, f);
    detail::open_leaf_files(*st, file_count, true);

    // second pass: route every series to its slots and write the records
    const auto lay = st->layout();
    const auto slots = detail::build_slot_map(arena, st->sax.size(), [](NodeId) { return true; });
    detail::LeafWriter writer(st->files, arena, lay);
    std::vector<float> z(ds.n);
    std::vector<std::byte> rec(lay.bytes());
    const std::uint64_t batch = opts.batch_series ? opts.batch_series : batch_series_for_bytes(ds.n, 100ull << 20);
    for_each_batch(ds, batch, [&](std::uint64_t first, std::span<const float> rows) {
        const std::uint64_t count = rows.size() / ds.n;
        for (std::uint64_t i = 0; i < count; ++i) {
            const SeriesId o = first + i;
            normalize_into(rows.subspan(i * ds.n, ds.n), z);
            lay.encode(z, st->sax.row(o), o, rec);
            for (const auto& [pack, slot] : slots.of(o)) writer.put(pack, slot, rec);
        }
    });
    writer.flush_all();

    Index ix = IndexAccess::make(std::move(st));
    ix.save();
    return ix;
}

bool same_structure(const Index& a, const Index& b) {
    return a.nodes() == b.nodes() && a.sax() == b.sax() && a.file_count() == b.file_count();
}

}  // namespace dumpy
