#include "dumpy/config.hpp"

#include <nlohmann/json.hpp>

#include "dumpy/io.hpp"

namespace dumpy {

void IndexConfig::validate() const {
    if (n == 0) throw InvalidArgument("config: series length must be positive");
    if (w < 1 || w > kMaxSegments) throw InvalidArgument("config: w must be in [1, 20]");
    if (n % static_cast<std::size_t>(w) != 0) throw InvalidArgument("config: w must divide n");
    if (bits < 1 || bits > kMaxBits) throw InvalidArgument("config: bits must be in [1, 8]");
    if (th == 0) throw InvalidArgument("config: th must be positive");
    if (!(alpha >= 0.0)) throw InvalidArgument("config: alpha must be >= 0");
    if (!(fill_low > 0.0 && fill_high >= fill_low)) throw InvalidArgument("config: bad fill-factor range");
    if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("config: rho must be in [0, 1]");
    if (!(fuzzy >= 0.0 && fuzzy < 1.0)) throw InvalidArgument("config: fuzzy fraction must be in [0, 1)");
    if (max_replication < 1) throw InvalidArgument("config: max_replication must be >= 1");
    if (!(distance.window_ratio > 0.0 && distance.window_ratio <= 1.0)) {
        throw InvalidArgument("config: window ratio must be in (0, 1]");
    }
    if (repack_after == 0) throw InvalidArgument("config: repack_after must be >= 1");
}

SplitParams IndexConfig::split_params() const {
    SplitParams p;
    p.th = th;
    p.alpha = alpha;
    p.fill_low = fill_low;
    p.fill_high = fill_high;
    p.restrict_window = !exhaustive_split;
    return p;
}

std::string config_to_json(const IndexConfig& c) {
    nlohmann::ordered_json j;
    j["version"] = IndexConfig::kVersion;
    j["n"] = c.n;
    j["w"] = c.w;
    j["bits"] = c.bits;
    j["th"] = c.th;
    j["alpha"] = c.alpha;
    j["fill_low"] = c.fill_low;
    j["fill_high"] = c.fill_high;
    j["rho"] = c.rho;
    j["fuzzy"] = c.fuzzy;
    j["max_replication"] = c.max_replication;
    j["distance"] = c.distance.is_dtw() ? "dtw" : "ed";
    j["window"] = c.distance.window_ratio;
    j["binary_split"] = c.binary_split;
    j["exhaustive_split"] = c.exhaustive_split;
    j["repack_after"] = c.repack_after;
    return j.dump(2) + "\n";
}

IndexConfig config_from_json(const std::string& text) {
    IndexConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        const int version = j.at("version").get<int>();
        if (version != IndexConfig::kVersion) {
            throw FormatError("config: unsupported version " + std::to_string(version));
        }
        c.n = j.at("n").get<std::size_t>();
        c.w = j.at("w").get<int>();
        c.bits = j.at("bits").get<int>();
        c.th = j.at("th").get<std::size_t>();
        c.alpha = j.at("alpha").get<double>();
        c.fill_low = j.at("fill_low").get<double>();
        c.fill_high = j.at("fill_high").get<double>();
        c.rho = j.at("rho").get<double>();
        c.fuzzy = j.at("fuzzy").get<double>();
        c.max_replication = j.at("max_replication").get<int>();
        const auto dist = j.at("distance").get<std::string>();
        if (dist != "ed" && dist != "dtw") throw FormatError("config: unknown distance '" + dist + "'");
        c.distance.kind = dist == "dtw" ? DistanceKind::Kind::DTW : DistanceKind::Kind::ED;
        c.distance.window_ratio = j.at("window").get<double>();
        c.binary_split = j.at("binary_split").get<bool>();
        c.exhaustive_split = j.at("exhaustive_split").get<bool>();
        c.repack_after = j.at("repack_after").get<std::uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(e.what());
    }
    return c;
}

void save_config(const IndexConfig& cfg, const std::filesystem::path& path) {
    const auto text = config_to_json(cfg);
    write_file(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

IndexConfig load_config(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return config_from_json(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace dumpy
