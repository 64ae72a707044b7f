#include "dpg/learner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpg/errors.hpp"

namespace dpg::net {

bool PolicyCache::update_if_newer(int peer, nn::MlpParams params, std::int64_t origin_step) {
    auto it = entries_.find(peer);
    if (it != entries_.end() && origin_step <= it->second.origin_step) return false;
    entries_[peer] = CachedPolicy{std::move(params), origin_step};
    return true;
}

const CachedPolicy& PolicyCache::get(int peer) const {
    auto it = entries_.find(peer);
    if (it == entries_.end())
        throw not_initialized_error("no cached policy for peer " + std::to_string(peer));
    return it->second;
}

std::int64_t PolicyCache::age(int peer, std::int64_t now) const { return now - get(peer).origin_step; }

} // namespace dpg::net

namespace dpg::ac {

OuNoise::OuNoise(int dim, double theta, double sigma, double dt)
    : x_(static_cast<std::size_t>(dim), 0.0), theta_(theta), sigma_(sigma), dt_(dt) {}

std::span<const double> OuNoise::step(Rng& rng) {
    double diffusion = sigma_ * std::sqrt(dt_);
    for (double& x : x_) x += theta_ * (0.0 - x) * dt_ + diffusion * rng.gaussian();
    return x_;
}

void OuNoise::set_state(std::vector<double> x) {
    if (x.size() != x_.size()) throw config_error("noise state has wrong dimension");
    x_ = std::move(x);
}

void OuNoise::reset() {
    for (double& x : x_) x = 0.0;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw config_error("replay capacity must be positive");
    ring_.resize(capacity);
}

void ReplayBuffer::push(game::GlobalTransition t) {
    if (size_ < capacity_) {
        ring_[(head_ + size_) % capacity_] = std::move(t);
        ++size_;
    } else {
        ring_[head_] = std::move(t); // overwrite the oldest
        head_ = (head_ + 1) % capacity_;
    }
}

const game::GlobalTransition& ReplayBuffer::at(std::size_t k) const {
    if (k >= size_) throw usage_error("replay index out of range");
    return ring_[(head_ + k) % capacity_];
}

std::int64_t ReplayBuffer::oldest_origin_step() const {
    if (size_ == 0) throw usage_error("replay is empty");
    std::int64_t oldest = at(0).origin_step;
    for (std::size_t k = 1; k < size_; ++k)
        if (at(k).origin_step < oldest) oldest = at(k).origin_step;
    return oldest;
}

std::int64_t ReplayBuffer::age_of_oldest(std::int64_t now) const {
    if (size_ == 0) return 0;
    return now - oldest_origin_step();
}

AgentLearner::AgentLearner(int id_, Algo algo_, GameLayout layout_,
                           const std::vector<int>& actor_widths,
                           const std::vector<int>& critic_widths, Rng& init_rng)
    : id(id_), algo(algo_), layout(std::move(layout_)) {
    nn::Shape actor_shape = nn::make_shape(layout.obs_dim, actor_widths, layout.act_dim,
                                           nn::Activation::Gelu, nn::Activation::Tanh);
    nn::Shape critic_shape =
        nn::make_shape(layout.enc_dim() + layout.joint_act_dim(), critic_widths, 1,
                       nn::Activation::Gelu, nn::Activation::Identity);
    actor = nn::MlpParams::random_init(actor_shape, init_rng);
    critic = nn::MlpParams::random_init(critic_shape, init_rng);
    actor_target = actor;
    critic_target = critic;
}

namespace {

void check_transition(const AgentLearner& l, const game::GlobalTransition& t) {
    const auto& lay = l.layout;
    if (static_cast<int>(t.state_enc.size()) != lay.enc_dim() ||
        static_cast<int>(t.next_enc.size()) != lay.enc_dim())
        throw data_error("transition state encoding has wrong dimension");
    if (static_cast<int>(t.action.size()) != lay.joint_act_dim())
        throw data_error("transition joint action has wrong dimension");
    if (static_cast<int>(t.rewards.size()) != lay.num_agents)
        throw data_error("transition reward vector has wrong dimension");
}

// Joint action under the product policy at `enc`: the own slot evaluated
// with `own_params` (tape kept for the chain rule), peer slots with the
// cached actors.
void joint_policy_action(AgentLearner& l, const nn::MlpParams& own_params,
                         const net::PolicyCache& aged, std::span<const double> enc,
                         nn::EvalTape& own_tape, std::vector<double>& joint) {
    const auto& lay = l.layout;
    joint.resize(static_cast<std::size_t>(lay.joint_act_dim()));
    auto& ws = l.ws;
    for (int j = 0; j < lay.num_agents; ++j) {
        const nn::MlpParams& params = (j == l.id) ? own_params : aged.get(j).params;
        nn::EvalTape& tape = (j == l.id) ? own_tape : ws.peer_tape;
        nn::actor_forward(params, lay.obs_of(enc, j), lay.bounds, tape, ws.action_buf);
        std::copy(ws.action_buf.begin(), ws.action_buf.end(),
                  joint.begin() + static_cast<std::size_t>(j) * lay.act_dim);
    }
}

void fill_critic_input(const GameLayout& lay, std::span<const double> enc,
                       std::span<const double> joint, std::vector<double>& input) {
    input.resize(enc.size() + joint.size());
    std::copy(enc.begin(), enc.end(), input.begin());
    for (std::size_t k = 0; k < joint.size(); ++k)
        input[enc.size() + k] = lay.action_feature(k, joint[k]);
}

// Critic direction into ws.critic_pg.
void critic_gradient_impl(AgentLearner& l, const net::PolicyCache& aged,
                          const game::GlobalTransition& t, double gamma) {
    check_transition(l, t);
    auto& ws = l.ws;
    const auto& lay = l.layout;

    // Bootstrap: own actor target, peers' cached actors, critic target.
    joint_policy_action(l, l.actor_target, aged, t.next_enc, ws.own_actor_tape, ws.joint_action);
    fill_critic_input(lay, t.next_enc, ws.joint_action, ws.critic_input);
    nn::forward(l.critic_target, ws.critic_input, ws.critic_tape);
    double q_next = ws.critic_tape.output[0];

    fill_critic_input(lay, t.state_enc, t.action, ws.critic_input);
    nn::forward(l.critic, ws.critic_input, ws.critic_tape);
    double q_now = ws.critic_tape.output[0];

    double delta = t.rewards[static_cast<std::size_t>(l.id)] + gamma * q_next - q_now;
    ws.out_grad.assign(1, delta);
    nn::backward(l.critic, ws.critic_tape, ws.out_grad, ws.critic_pg, ws.critic_ig);
}

// Actor direction into ws.actor_pg. Peer action slots come from the cache
// (product policy) or from the stored transition, depending on `algo`.
void actor_gradient_impl(AgentLearner& l, const net::PolicyCache& aged,
                         const game::GlobalTransition& t, Algo algo) {
    check_transition(l, t);
    auto& ws = l.ws;
    const auto& lay = l.layout;

    if (algo == Algo::ThreeDpg) {
        joint_policy_action(l, l.actor, aged, t.state_enc, ws.own_actor_tape, ws.joint_action);
    } else {
        ws.joint_action.assign(t.action.begin(), t.action.end());
        nn::actor_forward(l.actor, lay.obs_of(t.state_enc, l.id), lay.bounds, ws.own_actor_tape,
                          ws.action_buf);
        std::copy(ws.action_buf.begin(), ws.action_buf.end(),
                  ws.joint_action.begin() + static_cast<std::size_t>(l.id) * lay.act_dim);
    }

    fill_critic_input(lay, t.state_enc, ws.joint_action, ws.critic_input);
    nn::forward(l.critic, ws.critic_input, ws.critic_tape);
    ws.out_grad.assign(1, 1.0);
    nn::backward(l.critic, ws.critic_tape, ws.out_grad, ws.critic_pg, ws.critic_ig);

    // Input gradient restricted to the own action slot, mapped from feature
    // space back to raw action units before the chain through the actor.
    ws.action_buf.resize(static_cast<std::size_t>(lay.act_dim));
    const double* feat_grad = ws.critic_ig.data() + lay.enc_dim() + l.id * lay.act_dim;
    for (std::size_t d = 0; d < ws.action_buf.size(); ++d)
        ws.action_buf[d] = lay.feature_grad_to_raw(d, feat_grad[d]);
    nn::actor_backward(l.actor, ws.own_actor_tape, lay.bounds, ws.action_buf, ws.actor_pg,
                       ws.actor_ig, ws.scratch);
}

} // namespace

std::vector<double> critic_sample_gradient(AgentLearner& learner, const net::PolicyCache& aged,
                                           const game::GlobalTransition& t, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("gamma must lie in (0,1)");
    critic_gradient_impl(learner, aged, t, gamma);
    return learner.ws.critic_pg;
}

std::vector<double> actor_sample_gradient_3dpg(AgentLearner& learner, const net::PolicyCache& aged,
                                               const game::GlobalTransition& t) {
    actor_gradient_impl(learner, aged, t, Algo::ThreeDpg);
    return learner.ws.actor_pg;
}

std::vector<double> actor_sample_gradient_maddpg(AgentLearner& learner,
                                                 const game::GlobalTransition& t) {
    static const net::PolicyCache no_cache;
    actor_gradient_impl(learner, no_cache, t, Algo::Maddpg);
    return learner.ws.actor_pg;
}

bool train_step(AgentLearner& learner, const ReplayBuffer& buffer, const net::PolicyCache& aged,
                std::int64_t n, int minibatch, double gamma, double tau_soft,
                const StepSizeSchedule& schedule, Rng& rng) {
    if (minibatch < 1) throw config_error("minibatch must be positive");
    if (buffer.size() < static_cast<std::size_t>(minibatch)) return false;
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("gamma must lie in (0,1)");

    auto& ws = learner.ws;
    ws.critic_acc.assign(learner.critic.param_count(), 0.0);
    ws.actor_acc.assign(learner.actor.param_count(), 0.0);

    for (int m = 0; m < minibatch; ++m) {
        const auto& t = buffer.at(rng.uniform_index(buffer.size()));
        critic_gradient_impl(learner, aged, t, gamma);
        for (std::size_t k = 0; k < ws.critic_acc.size(); ++k) ws.critic_acc[k] += ws.critic_pg[k];
        actor_gradient_impl(learner, aged, t, learner.algo);
        for (std::size_t k = 0; k < ws.actor_acc.size(); ++k) ws.actor_acc[k] += ws.actor_pg[k];
    }

    double inv_m = 1.0 / static_cast<double>(minibatch);
    learner.critic.axpy(schedule.alpha(n) * inv_m, ws.critic_acc);
    learner.actor.axpy(schedule.beta(n) * inv_m, ws.actor_acc);
    learner.critic_target.soft_update_from(learner.critic, tau_soft);
    learner.actor_target.soft_update_from(learner.actor, tau_soft);
    return true;
}

std::vector<double> act(AgentLearner& learner, std::span<const double> obs, OuNoise& noise,
                        Rng& rng) {
    auto& ws = learner.ws;
    std::vector<double> action;
    nn::actor_forward(learner.actor, obs, learner.layout.bounds, ws.own_actor_tape, action);
    auto x = noise.step(rng);
    for (std::size_t d = 0; d < action.size(); ++d)
        action[d] += x[d] * learner.layout.bounds.halfwidth(static_cast<int>(d));
    learner.layout.bounds.clip(action);
    return action;
}

} // namespace dpg::ac
