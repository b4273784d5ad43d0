#include "index_state.hpp"

namespace dumpy {

namespace {

constexpr std::uint32_t kTreeVersion = 1;

void put_bits(ByteWriter& out, const std::vector<bool>& bits) {
    std::vector<std::uint8_t> packed((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    out.put_bytes(std::as_bytes(std::span<const std::uint8_t>(packed)));
}

std::vector<bool> get_bits(ByteReader& in, std::uint64_t count) {
    std::vector<bool> bits(count);
    std::uint8_t byte = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        if (i % 8 == 0) byte = in.get<std::uint8_t>();
        bits[i] = (byte >> (i % 8)) & 1u;
    }
    return bits;
}

void put_node(ByteWriter& out, const Node& n, int w) {
    out.put<std::uint8_t>(static_cast<std::uint8_t>(n.kind));
    out.put<std::uint8_t>(n.oversized ? 1 : 0);
    out.put<std::uint16_t>(n.layer);
    out.put<std::int32_t>(n.parent);
    if (n.kind == NodeKind::Free) return;
    for (int j = 0; j < w; ++j) out.put<std::uint8_t>(n.isax.code(j));
    for (int j = 0; j < w; ++j) out.put<std::uint8_t>(n.isax.depth(j));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(n.sids.size()));
    for (Sid s : n.sids) out.put<std::uint32_t>(s);
    out.put<std::uint64_t>(n.size);
    out.put<std::uint32_t>(n.leaf_count);
    out.put<std::uint8_t>(n.split_lambda);
    if (n.kind == NodeKind::Internal) {
        out.put<std::uint8_t>(static_cast<std::uint8_t>(n.csl.size()));
        for (auto s : n.csl) out.put<std::uint8_t>(s);
        for (NodeId r : n.routing) out.put<std::int32_t>(r);
        out.put<std::uint32_t>(static_cast<std::uint32_t>(n.children.size()));
        for (NodeId c : n.children) out.put<std::int32_t>(c);
        out.put<std::uint32_t>(n.extractions);
        return;
    }
    out.put<std::uint8_t>(n.demotion_bits);
    out.put<std::uint32_t>(n.extent.file);
    out.put<std::uint64_t>(n.extent.offset);
    out.put<std::uint64_t>(n.extent.capacity);
    out.put<std::uint64_t>(n.used());
    for (SeriesId o : n.slots) out.put<std::uint64_t>(o);
    put_bits(out, n.duplicate);
    put_bits(out, n.deleted);
}

Node get_node(ByteReader& in, int w, int bits, std::size_t node_count) {
    Node n;
    const auto kind = in.get<std::uint8_t>();
    if (kind > 2) throw FormatError("tree: bad node kind");
    n.kind = static_cast<NodeKind>(kind);
    n.oversized = in.get<std::uint8_t>() != 0;
    n.layer = in.get<std::uint16_t>();
    n.parent = in.get<std::int32_t>();
    if (n.kind == NodeKind::Free) return n;
    std::vector<std::uint8_t> codes(w), depths(w);
    for (auto& c : codes) c = in.get<std::uint8_t>();
    for (auto& d : depths) d = in.get<std::uint8_t>();
    try {
        n.isax = IsaxWord(codes, depths, bits);
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("tree: ") + e.what());
    }
    n.sids.resize(in.get<std::uint32_t>());
    for (auto& s : n.sids) s = in.get<std::uint32_t>();
    n.size = in.get<std::uint64_t>();
    n.leaf_count = in.get<std::uint32_t>();
    n.split_lambda = in.get<std::uint8_t>();
    auto check_id = [&](NodeId id) {
        if (id != kNoNode && (id < 0 || static_cast<std::size_t>(id) >= node_count)) {
            throw FormatError("tree: node reference out of range");
        }
        return id;
    };
    if (n.kind == NodeKind::Internal) {
        const int lambda = in.get<std::uint8_t>();
        if (lambda < 1 || lambda > w) throw FormatError("tree: bad chosen-segment count");
        n.csl.resize(lambda);
        for (auto& s : n.csl) {
            s = in.get<std::uint8_t>();
            if (s >= w) throw FormatError("tree: chosen segment out of range");
        }
        n.routing.resize(std::size_t{1} << lambda);
        for (auto& r : n.routing) r = check_id(in.get<std::int32_t>());
        n.children.resize(in.get<std::uint32_t>());
        for (auto& c : n.children) c = check_id(in.get<std::int32_t>());
        n.extractions = in.get<std::uint32_t>();
        return n;
    }
    n.demotion_bits = in.get<std::uint8_t>();
    n.extent.file = in.get<std::uint32_t>();
    n.extent.offset = in.get<std::uint64_t>();
    n.extent.capacity = in.get<std::uint64_t>();
    const auto used = in.get<std::uint64_t>();
    if (used > n.extent.capacity) throw FormatError("tree: pack holds more records than its extent");
    n.slots.resize(used);
    for (auto& o : n.slots) o = in.get<std::uint64_t>();
    n.duplicate = get_bits(in, used);
    n.deleted = get_bits(in, used);
    return n;
}

}  // namespace

void Index::save() const {
    const State& st = *s_;
    std::filesystem::create_directories(st.dir);
    save_config(st.cfg, detail::config_path(st.dir));
    st.sax.save(detail::sax_path(st.dir));
    ByteWriter out;
    out.put_magic("DTRE");
    out.put<std::uint32_t>(kTreeVersion);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(st.cfg.n));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(st.cfg.w));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(st.cfg.bits));
    out.put<std::uint64_t>(st.sax.size());
    out.put<std::uint32_t>(static_cast<std::uint32_t>(st.files.size()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(st.nodes.size()));
    for (const auto& n : st.nodes) put_node(out, n, st.cfg.w);
    for (auto f : {&UpdateStats::inserts, &UpdateStats::deletes, &UpdateStats::splits, &UpdateStats::extractions,
                   &UpdateStats::repacks, &UpdateStats::relocations}) {
        out.put<std::uint64_t>(st.stats.*f);
    }
    write_file(detail::tree_path(st.dir), out.bytes());
    for (const auto& f : st.files) f.sync();
}

Index Index::open(const std::filesystem::path& dir, std::optional<std::size_t> expected_n) {
    auto st = std::make_unique<State>();
    st->dir = dir;
    st->cfg = load_config(detail::config_path(dir));
    if (expected_n && *expected_n != st->cfg.n) {
        throw FormatError("index '" + dir.string() + "' stores series of length " + std::to_string(st->cfg.n) +
                          ", expected " + std::to_string(*expected_n));
    }
    st->alphabet.emplace(st->cfg.bits);
    st->sax = SaxTable::load(detail::sax_path(dir));
    if (st->sax.segments() != st->cfg.w || st->sax.bits() != st->cfg.bits) {
        throw FormatError("SAX table shape does not match config.json");
    }
    const auto bytes = read_file(detail::tree_path(dir));
    ByteReader in(bytes, "tree file '" + detail::tree_path(dir).string() + "'");
    in.expect_magic("DTRE");
    const auto version = in.get<std::uint32_t>();
    if (version != kTreeVersion) throw FormatError("tree: unsupported version " + std::to_string(version));
    const auto n = in.get<std::uint32_t>();
    const int w = in.get<std::uint16_t>();
    const int bits = in.get<std::uint16_t>();
    if (n != st->cfg.n || w != st->cfg.w || bits != st->cfg.bits) {
        throw FormatError("tree: header shape does not match config.json");
    }
    if (in.get<std::uint64_t>() != st->sax.size()) throw FormatError("tree: series count does not match sax.bin");
    const auto files = in.get<std::uint32_t>();
    const auto count = in.get<std::uint32_t>();
    if (count == 0) throw FormatError("tree: no root node");
    st->nodes.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) st->nodes.push_back(get_node(in, w, bits, count));
    for (auto f : {&UpdateStats::inserts, &UpdateStats::deletes, &UpdateStats::splits, &UpdateStats::extractions,
                   &UpdateStats::repacks, &UpdateStats::relocations}) {
        st->stats.*f = in.get<std::uint64_t>();
    }
    if (!in.at_end()) throw FormatError("tree: trailing bytes");
    detail::open_leaf_files(*st, files, false);
    return detail::IndexAccess::make(std::move(st));
}

}  // namespace dumpy
