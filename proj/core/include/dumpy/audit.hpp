#pragma once

// Consistency checks over a built or updated index. Each returns the list of
// violations found; an empty report means the index is sound.

#include <optional>
#include <string>
#include <vector>

#include "dumpy/index.hpp"

namespace dumpy {

struct AuditReport {
    std::vector<std::string> problems;
    std::uint64_t checked = 0;

    [[nodiscard]] bool ok() const { return problems.empty(); }
    void add(std::string p);
    void merge(const AuditReport& o);
};

/// True when `a` is a bit-prefix of `b` on every segment.
bool is_prefix_of(const IsaxWord& a, const IsaxWord& b);

/// Parent/child links, routing tables, word refinement, pack bookkeeping,
/// size limits and cached counts.
AuditReport audit_structure(const Index& ix);

/// Every live original sits in exactly one pack, that pack is where routing
/// sends it and its word covers the series. Record ordinals on disk must match
/// the slots. With `expected`, the set of live originals must equal it.
AuditReport audit_membership(const Index& ix, const std::optional<std::vector<SeriesId>>& expected = std::nullopt);

/// Fuzzy copies: each one crosses a single split boundary inside the
/// configured band, lands where fixed-bit descent leads, and no series has
/// more than max_replication live copies.
AuditReport audit_fuzzy(const Index& ix, const PaaTable& paa);

}  // namespace dumpy
