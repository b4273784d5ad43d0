#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dumpy/series.hpp"

namespace dumpy {

/// A small sibling leaf produced by one split.
struct PackCandidate {
    Sid sid = 0;
    std::uint64_t size = 0;
};

/// One pack: member sids (in joining order) and the sid bits on which they disagree.
struct PackAssignment {
    std::vector<Sid> members;
    Sid demoted_mask = 0;
    std::uint64_t size = 0;

    [[nodiscard]] int demotion_bits() const;
};

/// Largest demotion-bit count allowed for a split of `lambda` bits.
int demotion_budget(double rho, int lambda);

/// Greedy packing of sibling leaves. Candidates are visited by descending size
/// (ties: ascending sid); each joins the existing pack that needs the fewest
/// extra demotion bits (ties: earliest pack) while staying within the budget
/// and `th`, else opens a new pack. Candidates larger than `th` are rejected.
std::vector<PackAssignment> pack_leaves(std::span<const PackCandidate> candidates, double rho, std::size_t th,
                                        int lambda);

}  // namespace dumpy
