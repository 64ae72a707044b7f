#ifndef DPG_LEARNER_HPP
#define DPG_LEARNER_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dpg/game.hpp"
#include "dpg/mlp.hpp"
#include "dpg/policy_cache.hpp"
#include "dpg/rng.hpp"

namespace dpg::ac {

enum class Algo { ThreeDpg, Maddpg };

// Joint-problem layout from one agent's perspective: uniform per-agent
// observation/action dimensions and shared action bounds.
//
// Critics consume [state encoding | action features], where each raw action
// dimension is mapped affinely onto [-1,1]. Without this the action columns
// sit one to two orders of magnitude below the observation features and the
// critic's action sensitivity trains far too slowly.
struct GameLayout {
    int num_agents = 0;
    int obs_dim = 0;
    int act_dim = 0;
    nn::ActionBounds bounds;

    int enc_dim() const { return num_agents * obs_dim; }
    int joint_act_dim() const { return num_agents * act_dim; }
    std::span<const double> obs_of(std::span<const double> enc, int agent) const {
        return enc.subspan(static_cast<std::size_t>(agent) * obs_dim,
                           static_cast<std::size_t>(obs_dim));
    }
    std::span<const double> action_of(std::span<const double> joint, int agent) const {
        return joint.subspan(static_cast<std::size_t>(agent) * act_dim,
                             static_cast<std::size_t>(act_dim));
    }

    // k indexes the concatenated joint action; the bounds repeat per agent.
    double action_feature(std::size_t k, double raw) const {
        int d = static_cast<int>(k % static_cast<std::size_t>(act_dim));
        return (raw - bounds.midpoint(d)) / bounds.halfwidth(d);
    }
    double feature_grad_to_raw(std::size_t k, double feature_grad) const {
        int d = static_cast<int>(k % static_cast<std::size_t>(act_dim));
        return feature_grad / bounds.halfwidth(d);
    }
};

enum class ScheduleKind { Alpha, Beta };

// Step sizes alpha(n) = c/(n/s + 1) and beta(n) = alpha(n) + c/(n/s + 1)^2.
// With d = n/s + 1: alpha = c*s/(n+s) is a harmonic tail, so sum alpha
// diverges while sum alpha^2 converges; beta/alpha = 1 + s/(n+s) -> 1.
struct StepSizeSchedule {
    double numerator = std::exp(-6.0);
    double decay_scale = 1000.0;

    double alpha(std::int64_t n) const {
        return numerator / (static_cast<double>(n) / decay_scale + 1.0);
    }
    double beta(std::int64_t n) const {
        double d = static_cast<double>(n) / decay_scale + 1.0;
        return numerator / d + numerator / (d * d);
    }
    double eval(ScheduleKind kind, std::int64_t n) const {
        return kind == ScheduleKind::Alpha ? alpha(n) : beta(n);
    }
};

// x <- x + theta*(0 - x)*dt + sigma*sqrt(dt)*N(0,I). State is kept in
// normalized units; the caller scales it onto the action interval.
class OuNoise {
public:
    OuNoise(int dim, double theta, double sigma, double dt);

    std::span<const double> step(Rng& rng);
    const std::vector<double>& state() const { return x_; }
    void set_state(std::vector<double> x);
    void reset();

private:
    std::vector<double> x_;
    double theta_;
    double sigma_;
    double dt_;
};

// Fixed-capacity FIFO ring of global transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(game::GlobalTransition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return size_ == 0; }

    // k-th oldest entry, k in [0, size).
    const game::GlobalTransition& at(std::size_t k) const;

    // Exact minimum origin_step over the stored entries (scan).
    std::int64_t oldest_origin_step() const;

    // Delta(now) = now - oldest origin_step; 0 when empty.
    std::int64_t age_of_oldest(std::int64_t now) const;

private:
    std::vector<game::GlobalTransition> ring_;
    std::size_t capacity_;
    std::size_t head_ = 0; // index of the oldest entry
    std::size_t size_ = 0;
};

// Scratch tapes and buffers reused across gradient evaluations.
struct Workspace {
    nn::EvalTape critic_tape;
    nn::EvalTape own_actor_tape;
    nn::EvalTape peer_tape;
    std::vector<double> critic_input;
    std::vector<double> joint_action;
    std::vector<double> action_buf;
    std::vector<double> out_grad;
    std::vector<double> critic_pg, critic_ig;
    std::vector<double> actor_pg, actor_ig;
    std::vector<double> scratch;
    std::vector<double> critic_acc, actor_acc;
};

// One agent's actor/critic parameter sets plus their slow target copies.
// Single-writer: only the owning training loop mutates it.
struct AgentLearner {
    AgentLearner(int id, Algo algo, GameLayout layout, const std::vector<int>& actor_widths,
                 const std::vector<int>& critic_widths, Rng& init_rng);

    int id;
    Algo algo;
    GameLayout layout;
    nn::MlpParams actor;
    nn::MlpParams critic;
    nn::MlpParams actor_target;
    nn::MlpParams critic_target;
    Workspace ws;
};

// TD semi-gradient direction for the critic: grad Q(s_m, a_m) * delta with
// delta = r + gamma * Q_target(s_{m+1}, joint policy action) - Q(s_m, a_m).
// The bootstrap joint action uses the agent's own actor target and the
// peers' cached (aged) actors. The result is meant to be ADDED with step
// alpha(n); it is the negative gradient of 0.5*delta^2 with the target
// frozen. Throws not_initialized_error if a peer policy is missing.
std::vector<double> critic_sample_gradient(AgentLearner& learner, const net::PolicyCache& aged,
                                           const game::GlobalTransition& t, double gamma);

// grad_phi pi(s^i_m) * grad_{a^i} Q(s_m, joint policy action), with every
// action slot filled by a policy: own slot by the own current actor, peer
// slots by the cached (aged) actors.
std::vector<double> actor_sample_gradient_3dpg(AgentLearner& learner, const net::PolicyCache& aged,
                                               const game::GlobalTransition& t);

// Same chain rule, but peer slots take the actions stored in the transition.
std::vector<double> actor_sample_gradient_maddpg(AgentLearner& learner,
                                                 const game::GlobalTransition& t);

// One minibatch update: M uniform-with-replacement samples, averaged critic
// and actor directions applied with alpha(n)/beta(n), then a soft target
// update. Returns false (no changes) while the buffer holds fewer than M
// entries. Gradients for both nets are evaluated before either update, and
// samples are accumulated in draw order so the step is bit-reproducible.
bool train_step(AgentLearner& learner, const ReplayBuffer& buffer, const net::PolicyCache& aged,
                std::int64_t n, int minibatch, double gamma, double tau_soft,
                const StepSizeSchedule& schedule, Rng& rng);

// Policy action plus exploration noise, clipped to the bounds. The OU state
// is in normalized units and is scaled by each dimension's half-width.
std::vector<double> act(AgentLearner& learner, std::span<const double> obs, OuNoise& noise,
                        Rng& rng);

} // namespace dpg::ac

#endif
