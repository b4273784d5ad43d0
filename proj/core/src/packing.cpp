#include "dumpy/packing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace dumpy {

int PackAssignment::demotion_bits() const { return std::popcount(demoted_mask); }

int demotion_budget(double rho, int lambda) {
    return static_cast<int>(std::floor(rho * static_cast<double>(lambda) + 1e-9));
}

std::vector<PackAssignment> pack_leaves(std::span<const PackCandidate> candidates, double rho, std::size_t th,
                                        int lambda) {
    std::vector<PackCandidate> order(candidates.begin(), candidates.end());
    for (const auto& c : order) {
        if (c.size > th) throw InvalidArgument("pack_leaves: candidate larger than the leaf threshold");
    }
    std::sort(order.begin(), order.end(), [](const PackCandidate& a, const PackCandidate& b) {
        return a.size != b.size ? a.size > b.size : a.sid < b.sid;
    });
    const int budget = demotion_budget(rho, lambda);
    std::vector<PackAssignment> packs;
    for (const auto& c : order) {
        int best = -1;
        int best_added = 0;
        for (std::size_t p = 0; p < packs.size(); ++p) {
            const auto& pk = packs[p];
            if (pk.size + c.size > th) continue;
            const Sid mask = pk.demoted_mask | (pk.members.front() ^ c.sid);
            if (std::popcount(mask) > budget) continue;
            const int added = std::popcount(mask) - std::popcount(pk.demoted_mask);
            if (best < 0 || added < best_added) {
                best = static_cast<int>(p);
                best_added = added;
            }
        }
        if (best < 0) {
            packs.push_back({{c.sid}, 0, c.size});
            continue;
        }
        auto& pk = packs[best];
        pk.demoted_mask |= pk.members.front() ^ c.sid;
        pk.members.push_back(c.sid);
        pk.size += c.size;
    }
    return packs;
}

}  // namespace dumpy
