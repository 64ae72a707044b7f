#ifndef DPG_GAME_HPP
#define DPG_GAME_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dpg/mlp.hpp"
#include "dpg/rng.hpp"

namespace dpg::game {

enum class Variant { Spread, Coord };

// How the orientation angle evolves in the Coord variant: either steered by a
// third action dimension, or snapped to the direction of movement.
enum class OrientationMode { Action, Heading };

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct EnvConfig {
    Variant variant = Variant::Spread;
    int num_agents = 2;
    int num_landmarks = 3;
    int horizon = 25;
    OrientationMode orientation_mode = OrientationMode::Action;
};

// Agent positions and landmarks live in [-1,1]^2; orientations in [0,2pi).
struct GlobalState {
    std::vector<Vec2> agent_pos;
    std::vector<double> agent_theta;
    std::vector<Vec2> landmarks;
};

using JointAction = std::vector<std::vector<double>>; // one action vector per agent

// A stored global transition. The state the critics consume is the
// concatenation of all local observations; raw states are kept alongside
// when available (centralized runs) for reward cross-checks and debugging.
struct GlobalTransition {
    std::vector<double> state_enc;
    std::vector<double> action; // concatenated local actions
    std::vector<double> rewards; // one per agent
    std::vector<double> next_enc;
    std::int64_t origin_step = 0;
    std::optional<GlobalState> raw_state;
    std::optional<GlobalState> raw_next;
};

int action_dims(const EnvConfig& cfg);
nn::ActionBounds action_bounds(const EnvConfig& cfg);

// 2L + 2(D-1) + 2: landmark displacements, peer displacements, own (cos,sin).
int obs_dim(const EnvConfig& cfg);
int enc_dim(const EnvConfig& cfg);

double wrap_angle(double theta);              // into [0, 2pi)
double angle_diff(double a, double b);        // wrapped absolute difference, in [0, pi]

GlobalState env_reset(const EnvConfig& cfg, Rng& rng);

// Deterministic dynamics: displace + clamp, steer + wrap. Rewards are
// evaluated on the successor state and are identical across agents here.
// Throws contract_error if any action component is out of bounds.
struct StepResult {
    GlobalState next;
    std::vector<double> rewards;
};
StepResult env_step(const EnvConfig& cfg, const GlobalState& state, const JointAction& action);

// exp(-(1/L) * sum_l min_i ||pos_i - lm_l||), in (0,1].
double reward_spread(const EnvConfig& cfg, const GlobalState& state);

// reward_spread weighted by exp(-mean pairwise orientation difference).
double reward_coord(const EnvConfig& cfg, const GlobalState& state);

// Displacements to landmarks, then to the other agents (in index order,
// skipping self), then own (cos theta, sin theta).
std::vector<double> observe(const EnvConfig& cfg, const GlobalState& state, int agent);

// Concatenation of all agents' observations, agent-major.
std::vector<double> encode_global(const EnvConfig& cfg, const GlobalState& state);

// The variant reward recomputed from an encoding alone. This is the canonical
// reward path: env_step and the network-side tuple assembly both use it, so a
// locally reassembled transition carries bit-identical rewards.
double reward_from_encoding(const EnvConfig& cfg, std::span<const double> enc);

} // namespace dpg::game

#endif
