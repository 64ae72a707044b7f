#include "dpg/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dpg/errors.hpp"

namespace dpg::net {

namespace {

std::int64_t fragments_for(std::int64_t size_bits, std::int64_t budget_bits) {
    if (size_bits <= 0) return 0;
    return (size_bits + budget_bits - 1) / budget_bits;
}

void quantize_payload(std::vector<double>& payload) {
    for (double& v : payload) v = static_cast<double>(static_cast<float>(v));
}

} // namespace

ChannelLink::ChannelLink(int owner, double lambda, std::int64_t budget_bits)
    : owner_(owner), lambda_(lambda), budget_bits_(budget_bits) {
    if (budget_bits < 1) throw config_error("link budget must be positive");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw config_error("access probability must be in (0,1]");
}

std::optional<Message> ChannelLink::enqueue(Message msg) {
    std::int64_t frags = fragments_for(msg.size_bits, budget_bits_);
    if (frags == 0) return msg; // instant wire, nothing to transmit
    enqueued_bits_ += msg.size_bits;
    std::int64_t bits = msg.size_bits;
    queue_.push_back(InFlight{std::move(msg), frags, bits});
    return std::nullopt;
}

std::optional<Message> ChannelLink::tick(Rng& rng) {
    // The access draw happens every slot, queue or no queue, so the channel
    // process is independent of what the schedulers put on the wire.
    bool success = rng.bernoulli(lambda_);
    if (!success) return std::nullopt;
    ++successes_;
    if (queue_.empty()) return std::nullopt;

    InFlight& front = queue_.front();
    std::int64_t moved = std::min(budget_bits_, front.bits_left);
    front.bits_left -= moved;
    delivered_bits_ += moved;
    if (--front.fragments_left > 0) return std::nullopt;

    Message done = std::move(front.msg);
    queue_.pop_front();
    return done;
}

std::int64_t ChannelLink::queued_bits() const {
    std::int64_t bits = 0;
    for (const auto& f : queue_) bits += f.bits_left;
    return bits;
}

CycleScheduler::CycleScheduler(int tuples_per_cycle) : tuples_per_cycle_(tuples_per_cycle) {
    if (tuples_per_cycle < 0) throw config_error("tuples_per_cycle must be >= 0");
}

void CycleScheduler::offer_tuple(std::int64_t step, std::vector<double> payload) {
    latest_ = LocalTuple{step, std::move(payload)};
}

std::optional<Message> CycleScheduler::next(int agent, std::int64_t slot,
                                            const nn::MlpParams& current_actor,
                                            std::int64_t policy_bits, std::int64_t tuple_bits) {
    if (position_ == 0) {
        if (last_policy_slot_ == slot) return std::nullopt; // one snapshot per slot
        last_policy_slot_ = slot;
        if (tuples_per_cycle_ > 0) position_ = 1;
        return Message{MessageKind::PolicyUpdate, agent, slot, current_actor.values(), policy_bits};
    }
    if (latest_.step <= last_sent_tuple_) return std::nullopt; // nothing unsent yet
    last_sent_tuple_ = latest_.step;
    Message msg{MessageKind::LocalTuple, agent, latest_.step, latest_.payload, tuple_bits};
    position_ = (position_ == tuples_per_cycle_) ? 0 : position_ + 1;
    return msg;
}

TupleAssembler::TupleAssembler(int own_agent, game::EnvConfig env_cfg, std::int64_t history_cap)
    : own_agent_(own_agent), env_cfg_(env_cfg), history_cap_(history_cap),
      obs_dim_(game::obs_dim(env_cfg)), act_dim_(game::action_dims(env_cfg)) {}

void TupleAssembler::add_own(std::int64_t step, std::span<const double> obs,
                             std::span<const double> action, std::span<const double> next_obs) {
    Slot s;
    s.obs.assign(obs.begin(), obs.end());
    s.action.assign(action.begin(), action.end());
    s.next_obs.assign(next_obs.begin(), next_obs.end());
    own_[step] = std::move(s);
    try_assemble(step);
    prune(step);
}

void TupleAssembler::add_peer(int peer, std::int64_t step, std::span<const double> payload) {
    if (static_cast<int>(payload.size()) != 2 * obs_dim_ + act_dim_)
        throw data_error("local tuple payload has wrong length");
    Slot s;
    s.obs.assign(payload.begin(), payload.begin() + obs_dim_);
    s.action.assign(payload.begin() + obs_dim_, payload.begin() + obs_dim_ + act_dim_);
    s.next_obs.assign(payload.begin() + obs_dim_ + act_dim_, payload.end());
    peers_[peer][step] = std::move(s);
    try_assemble(step);
}

void TupleAssembler::try_assemble(std::int64_t step) {
    const int D = env_cfg_.num_agents;
    std::vector<const Slot*> parts(static_cast<std::size_t>(D), nullptr);
    for (int j = 0; j < D; ++j) {
        if (j == own_agent_) {
            auto it = own_.find(step);
            if (it == own_.end()) return;
            parts[static_cast<std::size_t>(j)] = &it->second;
        } else {
            auto pit = peers_.find(j);
            if (pit == peers_.end()) return;
            auto it = pit->second.find(step);
            if (it == pit->second.end()) return;
            parts[static_cast<std::size_t>(j)] = &it->second;
        }
    }

    game::GlobalTransition t;
    t.origin_step = step;
    for (const Slot* s : parts) t.state_enc.insert(t.state_enc.end(), s->obs.begin(), s->obs.end());
    for (const Slot* s : parts) t.action.insert(t.action.end(), s->action.begin(), s->action.end());
    for (const Slot* s : parts)
        t.next_enc.insert(t.next_enc.end(), s->next_obs.begin(), s->next_obs.end());
    double r = game::reward_from_encoding(env_cfg_, t.next_enc);
    t.rewards.assign(static_cast<std::size_t>(D), r);
    emitted_.push_back(std::move(t));

    // A step assembles exactly once: consume its parts.
    own_.erase(step);
    for (auto& [peer, store] : peers_) store.erase(step);
}

void TupleAssembler::prune(std::int64_t latest_step) {
    std::int64_t cutoff = latest_step - history_cap_;
    if (cutoff <= 0) return;
    own_.erase(own_.begin(), own_.lower_bound(cutoff));
    for (auto& [peer, store] : peers_) store.erase(store.begin(), store.lower_bound(cutoff));
}

std::vector<game::GlobalTransition> TupleAssembler::take_emitted() {
    std::vector<game::GlobalTransition> out;
    out.swap(emitted_);
    return out;
}

AoiTracker::AoiTracker(int num_agents) : num_agents_(num_agents) {}

void AoiTracker::record(std::int64_t slot, std::vector<std::int64_t> tau,
                        std::vector<std::int64_t> delta) {
    rows_.push_back(Row{slot, std::move(tau), std::move(delta)});
}

std::vector<std::int64_t> AoiTracker::pooled_tau() const {
    std::vector<std::int64_t> out;
    out.reserve(rows_.size() * pair_count());
    for (const auto& r : rows_) out.insert(out.end(), r.tau.begin(), r.tau.end());
    return out;
}

double negbinom_trials_tail(std::int64_t m, int successes, double p) {
    if (successes <= 0) return 0.0;
    if (m < successes) return 1.0;
    if (p >= 1.0) return 0.0;
    if (p <= 0.0) return 1.0;
    // P(T > m) = P(Binomial(m, p) <= successes-1)
    double log_p = std::log(p);
    double log_q = std::log1p(-p);
    double dm = static_cast<double>(m);
    double tail = 0.0;
    for (int k = 0; k < successes; ++k) {
        double dk = static_cast<double>(k);
        double log_choose =
            std::lgamma(dm + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dm - dk + 1.0);
        tail += std::exp(log_choose + dk * log_p + (dm - dk) * log_q);
    }
    return std::min(tail, 1.0);
}

DominanceReport dominance_check(std::span<const std::int64_t> samples,
                                const std::function<double(std::int64_t)>& candidate_tail,
                                double level, std::size_t min_samples) {
    DominanceReport report;
    report.num_samples = samples.size();
    if (samples.size() < min_samples) return report; // enough_data stays false
    report.enough_data = true;

    std::int64_t max_v = 0;
    for (std::int64_t s : samples) {
        if (s < 0) throw data_error("AoI samples must be non-negative");
        max_v = std::max(max_v, s);
    }

    // Histogram, then suffix sums for the empirical complementary CDF.
    std::vector<std::size_t> counts(static_cast<std::size_t>(max_v) + 2, 0);
    for (std::int64_t s : samples) ++counts[static_cast<std::size_t>(s)];
    double n = static_cast<double>(samples.size());
    double band = std::sqrt(std::log(2.0 / (1.0 - level)) / (2.0 * n));

    double exceed = static_cast<double>(samples.size());
    double worst = std::numeric_limits<double>::infinity();
    for (std::int64_t m = 0; m <= max_v; ++m) {
        exceed -= static_cast<double>(counts[static_cast<std::size_t>(m)]);
        double empirical = exceed / n; // P_emp(X > m)
        double margin = candidate_tail(m) + band - empirical;
        worst = std::min(worst, margin);
    }
    report.worst_margin = worst;
    report.dominated = worst >= 0.0;
    return report;
}

NetworkSim::NetworkSim(game::EnvConfig env_cfg, NetConfig cfg, nn::Shape actor_shape,
                       std::uint64_t seed)
    : env_cfg_(env_cfg), cfg_(cfg), actor_shape_(std::move(actor_shape)),
      num_agents_(env_cfg.num_agents) {
    nn::validate_shape(actor_shape_);
    std::int64_t actor_params = static_cast<std::int64_t>(nn::param_count(actor_shape_));
    std::int64_t tuple_len = 2 * game::obs_dim(env_cfg_) + game::action_dims(env_cfg_);

    if (cfg_.policy_bits_override >= 0) policy_bits_ = cfg_.policy_bits_override;
    else if (cfg_.force_paper_ratios) policy_bits_ = 45000;
    else policy_bits_ = 32 * actor_params;

    if (cfg_.tuple_bits_override >= 0) tuple_bits_ = cfg_.tuple_bits_override;
    else if (cfg_.force_paper_ratios) tuple_bits_ = 1363;
    else tuple_bits_ = 32 * tuple_len;

    for (int i = 0; i < num_agents_; ++i) {
        links_.emplace_back(i, cfg_.lambda_of(i), cfg_.budget_bits);
        schedulers_.emplace_back(cfg_.tuples_per_cycle);
        caches_.emplace_back();
        assemblers_.emplace_back(i, env_cfg_, cfg_.own_history_cap);
        link_rngs_.push_back(Rng::substream(seed, 0x6c696e6bull + static_cast<std::uint64_t>(i)));
    }
}

void NetworkSim::seed_initial_policies(const std::vector<const nn::MlpParams*>& actors) {
    for (int i = 0; i < num_agents_; ++i)
        for (int j = 0; j < num_agents_; ++j) {
            if (i == j) continue;
            caches_[static_cast<std::size_t>(i)].update_if_newer(
                j, *actors[static_cast<std::size_t>(j)], 0);
        }
}

void NetworkSim::offer_local_tuple(int agent, std::int64_t step, std::span<const double> obs,
                                   std::span<const double> action,
                                   std::span<const double> next_obs) {
    assemblers_[static_cast<std::size_t>(agent)].add_own(step, obs, action, next_obs);
    std::vector<double> payload;
    payload.reserve(obs.size() + action.size() + next_obs.size());
    payload.insert(payload.end(), obs.begin(), obs.end());
    payload.insert(payload.end(), action.begin(), action.end());
    payload.insert(payload.end(), next_obs.begin(), next_obs.end());
    schedulers_[static_cast<std::size_t>(agent)].offer_tuple(step, std::move(payload));
}

void NetworkSim::comm_phase(std::int64_t slot, const std::vector<const nn::MlpParams*>& actors) {
    if (static_cast<int>(actors.size()) != num_agents_)
        throw usage_error("comm_phase needs one actor per agent");

    // Refill idle links from the cycle; zero-size messages deliver in place.
    for (int i = 0; i < num_agents_; ++i) {
        auto& link = links_[static_cast<std::size_t>(i)];
        auto& sched = schedulers_[static_cast<std::size_t>(i)];
        while (link.queue_empty()) {
            auto msg = sched.next(i, slot, *actors[static_cast<std::size_t>(i)], policy_bits_,
                                  tuple_bits_);
            if (!msg) break;
            if (msg->kind == MessageKind::PolicyUpdate &&
                static_cast<std::size_t>(msg->payload.size()) != nn::param_count(actor_shape_))
                throw data_error("policy payload length does not match actor parameter count");
            if (auto instant = link.enqueue(std::move(*msg))) deliver(*instant);
        }
    }

    for (int i = 0; i < num_agents_; ++i) {
        if (auto done = links_[static_cast<std::size_t>(i)].tick(link_rngs_[static_cast<std::size_t>(i)]))
            deliver(*done);
    }
}

void NetworkSim::deliver(const Message& msg) {
    std::vector<double> payload = msg.payload;
    if (cfg_.quantize_wire) quantize_payload(payload);

    for (int j = 0; j < num_agents_; ++j) {
        if (j == msg.origin_agent) continue;
        if (msg.kind == MessageKind::PolicyUpdate) {
            if (payload.size() != nn::param_count(actor_shape_))
                throw data_error("delivered policy has wrong parameter count");
            nn::MlpParams params = nn::MlpParams::zeros(actor_shape_);
            params.set_values(payload);
            caches_[static_cast<std::size_t>(j)].update_if_newer(msg.origin_agent,
                                                                 std::move(params),
                                                                 msg.origin_step);
        } else {
            assemblers_[static_cast<std::size_t>(j)].add_peer(msg.origin_agent, msg.origin_step,
                                                              payload);
        }
    }
}

std::vector<game::GlobalTransition> NetworkSim::take_staged(int agent) {
    return assemblers_[static_cast<std::size_t>(agent)].take_emitted();
}

std::int64_t NetworkSim::policy_fragments() const {
    return fragments_for(policy_bits_, cfg_.budget_bits);
}

std::int64_t NetworkSim::tuple_fragments() const {
    return fragments_for(tuple_bits_, cfg_.budget_bits);
}

std::vector<std::int64_t> NetworkSim::tau_row(std::int64_t slot) const {
    std::vector<std::int64_t> tau;
    tau.reserve(static_cast<std::size_t>(num_agents_) * (num_agents_ - 1));
    for (int i = 0; i < num_agents_; ++i)
        for (int j = 0; j < num_agents_; ++j) {
            if (i == j) continue;
            tau.push_back(caches_[static_cast<std::size_t>(i)].age(j, slot));
        }
    return tau;
}

GradientErrorNorms staleness_gradient_error(ac::AgentLearner& learner, const PolicyCache& fresh,
                                            const PolicyCache& aged,
                                            const game::GlobalTransition& t, double gamma) {
    auto norm_diff = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            double d = a[k] - b[k];
            s += d * d;
        }
        return std::sqrt(s);
    };

    std::vector<double> critic_aged = ac::critic_sample_gradient(learner, aged, t, gamma);
    std::vector<double> critic_fresh = ac::critic_sample_gradient(learner, fresh, t, gamma);
    std::vector<double> actor_aged = ac::actor_sample_gradient_3dpg(learner, aged, t);
    std::vector<double> actor_fresh = ac::actor_sample_gradient_3dpg(learner, fresh, t);

    GradientErrorNorms norms;
    norms.critic = norm_diff(critic_fresh, critic_aged);
    norms.actor = norm_diff(actor_fresh, actor_aged);
    return norms;
}

} // namespace dpg::net
