#ifndef DPG_NETSIM_HPP
#define DPG_NETSIM_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dpg/game.hpp"
#include "dpg/learner.hpp"
#include "dpg/mlp.hpp"
#include "dpg/policy_cache.hpp"
#include "dpg/rng.hpp"

namespace dpg::net {

enum class MessageKind { PolicyUpdate, LocalTuple };

// Wire accounting is single precision: 32 bits per payload entry, unless a
// size override (paper ratios or a test fixture) pins the byte count.
struct Message {
    MessageKind kind = MessageKind::PolicyUpdate;
    int origin_agent = 0;
    std::int64_t origin_step = 0;
    std::vector<double> payload;
    std::int64_t size_bits = 0;
};

struct NetConfig {
    double lambda = 0.1353352832366127; // exp(-2)
    std::vector<double> lambda_per_agent; // optional per-agent override
    std::int64_t budget_bits = 15000;
    int tuples_per_cycle = 33; // K
    bool force_paper_ratios = false;
    bool quantize_wire = true;
    std::int64_t policy_bits_override = -1; // >=0 pins the policy message size
    std::int64_t tuple_bits_override = -1;  // >=0 pins the tuple message size
    std::int64_t own_history_cap = 50000;

    double lambda_of(int agent) const {
        if (!lambda_per_agent.empty()) return lambda_per_agent.at(static_cast<std::size_t>(agent));
        return lambda;
    }
};

// Bernoulli-access unidirectional link with a per-slot bit budget. Messages
// are fragmented at enqueue time into ceil(size/budget) chunks; one slot of
// successful access moves exactly one fragment, in order. Access failure
// only delays: nothing queued is ever dropped or duplicated.
class ChannelLink {
public:
    ChannelLink(int owner, double lambda, std::int64_t budget_bits);

    // Zero-fragment messages (size 0) are returned right away instead of
    // being queued; they model the degenerate instant-wire test setup.
    std::optional<Message> enqueue(Message msg);

    // One slot: draw channel access, move one fragment on success, return
    // the completed message if its last fragment just arrived.
    std::optional<Message> tick(Rng& rng);

    bool queue_empty() const { return queue_.empty(); }
    std::int64_t queued_bits() const;
    std::int64_t enqueued_bits_total() const { return enqueued_bits_; }
    std::int64_t delivered_bits_total() const { return delivered_bits_; }
    std::int64_t successful_slots() const { return successes_; }
    int owner() const { return owner_; }

private:
    struct InFlight {
        Message msg;
        std::int64_t fragments_left = 0;
        std::int64_t bits_left = 0;
    };

    int owner_;
    double lambda_;
    std::int64_t budget_bits_;
    std::deque<InFlight> queue_;
    std::int64_t enqueued_bits_ = 0;
    std::int64_t delivered_bits_ = 0;
    std::int64_t successes_ = 0;
};

// Position-based transmission cycle: one policy snapshot, then K tuple
// messages, repeat. A stalled position resumes where it left off; a policy
// is snapshotted at most once per slot, and each tuple message carries the
// most recent not-yet-sent local tuple.
class CycleScheduler {
public:
    explicit CycleScheduler(int tuples_per_cycle);

    struct LocalTuple {
        std::int64_t step = -1;
        std::vector<double> payload; // obs | action | next_obs
    };

    void offer_tuple(std::int64_t step, std::vector<double> payload);

    std::optional<Message> next(int agent, std::int64_t slot, const nn::MlpParams& current_actor,
                                std::int64_t policy_bits, std::int64_t tuple_bits);

    std::int64_t last_sent_tuple_step() const { return last_sent_tuple_; }

private:
    int tuples_per_cycle_;
    int position_ = 0; // 0 = policy, 1..K = tuples
    std::int64_t last_policy_slot_ = -1;
    std::int64_t last_sent_tuple_ = -1;
    LocalTuple latest_;
};

// Per-agent store of local tuples keyed by origin step. When the tuples of
// all agents for a step are present, exactly one global transition is
// assembled, with the reward recomputed locally from the encoding.
class TupleAssembler {
public:
    TupleAssembler(int own_agent, game::EnvConfig env_cfg, std::int64_t history_cap);

    void add_own(std::int64_t step, std::span<const double> obs, std::span<const double> action,
                 std::span<const double> next_obs);
    void add_peer(int peer, std::int64_t step, std::span<const double> payload);

    std::vector<game::GlobalTransition> take_emitted();
    std::size_t own_store_size() const { return own_.size(); }

private:
    struct Slot {
        std::vector<double> obs, action, next_obs;
    };

    void try_assemble(std::int64_t step);
    void prune(std::int64_t latest_step);

    int own_agent_;
    game::EnvConfig env_cfg_;
    std::int64_t history_cap_;
    int obs_dim_, act_dim_;
    std::map<std::int64_t, Slot> own_;
    std::map<int, std::map<std::int64_t, Slot>> peers_;
    std::vector<game::GlobalTransition> emitted_;
};

// Time series of policy ages (tau, per ordered peer pair) and replay ages
// (delta, per agent), one row per slot.
class AoiTracker {
public:
    explicit AoiTracker(int num_agents);

    struct Row {
        std::int64_t slot = 0;
        std::vector<std::int64_t> tau;   // ordered pairs (i,j), i != j, i-major
        std::vector<std::int64_t> delta; // per agent
    };

    void record(std::int64_t slot, std::vector<std::int64_t> tau, std::vector<std::int64_t> delta);
    const std::vector<Row>& rows() const { return rows_; }
    int num_agents() const { return num_agents_; }
    std::size_t pair_count() const { return rows_.empty() ? 0 : rows_.front().tau.size(); }

    // All tau samples across pairs and slots, in recording order.
    std::vector<std::int64_t> pooled_tau() const;

private:
    int num_agents_;
    std::vector<Row> rows_;
};

// P(T > m) for T = number of Bernoulli(p) trials needed for `successes`
// successes (negative binomial completion time).
double negbinom_trials_tail(std::int64_t m, int successes, double p);

struct DominanceReport {
    bool enough_data = false;
    bool dominated = false;
    double worst_margin = 0.0; // min over m of candidate+band-empirical; <0 when violated
    std::size_t num_samples = 0;
};

// Empirical complementary CDF of the samples against a candidate tail,
// pointwise, with a DKW confidence band at `level`.
DominanceReport dominance_check(std::span<const std::int64_t> samples,
                                const std::function<double(std::int64_t)>& candidate_tail,
                                double level = 0.99, std::size_t min_samples = 1000);

// The whole per-run communication fabric: one broadcast link per agent, a
// transmission cycle per agent, per-agent policy caches and tuple
// assemblers. Stepped synchronously with the environment slot clock.
class NetworkSim {
public:
    NetworkSim(game::EnvConfig env_cfg, NetConfig cfg, nn::Shape actor_shape, std::uint64_t seed);

    // Free initial exchange: peers start from the shared-seed initializations.
    void seed_initial_policies(const std::vector<const nn::MlpParams*>& actors);

    void offer_local_tuple(int agent, std::int64_t step, std::span<const double> obs,
                           std::span<const double> action, std::span<const double> next_obs);

    // One slot of scheduling, transmission and delivery for every agent.
    void comm_phase(std::int64_t slot, const std::vector<const nn::MlpParams*>& actors);

    // Transitions fully assembled at `agent` since the last call. The caller
    // commits them to the replay after its training step.
    std::vector<game::GlobalTransition> take_staged(int agent);

    PolicyCache& cache(int agent) { return caches_.at(static_cast<std::size_t>(agent)); }
    const PolicyCache& cache(int agent) const { return caches_.at(static_cast<std::size_t>(agent)); }
    const ChannelLink& link(int agent) const { return links_.at(static_cast<std::size_t>(agent)); }

    std::int64_t policy_bits() const { return policy_bits_; }
    std::int64_t tuple_bits() const { return tuple_bits_; }
    std::int64_t policy_fragments() const;
    std::int64_t tuple_fragments() const;

    // tau_ij(slot) for all ordered pairs, agent-major; matches AoiTracker's layout.
    std::vector<std::int64_t> tau_row(std::int64_t slot) const;

private:
    void deliver(const Message& msg);

    game::EnvConfig env_cfg_;
    NetConfig cfg_;
    nn::Shape actor_shape_;
    int num_agents_;
    std::int64_t policy_bits_;
    std::int64_t tuple_bits_;
    std::vector<ChannelLink> links_;
    std::vector<CycleScheduler> schedulers_;
    std::vector<PolicyCache> caches_;
    std::vector<TupleAssembler> assemblers_;
    std::vector<Rng> link_rngs_;
};

// Age-induced gradient error: norms of the difference between the critic and
// actor directions computed with the fresh peer policies versus the aged
// cache. A centralized-visibility diagnostic.
struct GradientErrorNorms {
    double critic = 0.0;
    double actor = 0.0;
};
GradientErrorNorms staleness_gradient_error(ac::AgentLearner& learner, const PolicyCache& fresh,
                                            const PolicyCache& aged,
                                            const game::GlobalTransition& t, double gamma);

} // namespace dpg::net

#endif
