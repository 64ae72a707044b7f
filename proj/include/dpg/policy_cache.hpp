#ifndef DPG_POLICY_CACHE_HPP
#define DPG_POLICY_CACHE_HPP

#include <cstdint>
#include <map>

#include "dpg/mlp.hpp"

namespace dpg::net {

struct CachedPolicy {
    nn::MlpParams params;
    std::int64_t origin_step = -1;
};

// One agent's view of its peers' actor parametrizations, each stamped with
// the step the snapshot was taken at. The cache only moves forward: a
// delivery older than what is already held is discarded.
class PolicyCache {
public:
    // Returns false (and keeps the current entry) unless origin_step is
    // strictly newer than the held one.
    bool update_if_newer(int peer, nn::MlpParams params, std::int64_t origin_step);

    bool has(int peer) const { return entries_.count(peer) != 0; }

    // Throws not_initialized_error for an unknown peer.
    const CachedPolicy& get(int peer) const;

    // tau(peer, now) = now - origin_step, always >= 0 for now >= origin.
    std::int64_t age(int peer, std::int64_t now) const;

    const std::map<int, CachedPolicy>& entries() const { return entries_; }

private:
    std::map<int, CachedPolicy> entries_;
};

} // namespace dpg::net

#endif
