#include "dpg/game.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dpg/errors.hpp"

namespace dpg::game {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kDisplacementBound = 0.1;
constexpr double kSteerBound = 0.25;

double clamp_unit(double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); }

double norm2(double dx, double dy) { return std::sqrt(dx * dx + dy * dy); }

// |angle between unit vectors (c1,s1),(c2,s2)|, in [0,pi].
double angle_between(double c1, double s1, double c2, double s2) {
    return std::fabs(std::atan2(s1 * c2 - c1 * s2, c1 * c2 + s1 * s2));
}

} // namespace

int action_dims(const EnvConfig& cfg) {
    if (cfg.variant == Variant::Coord && cfg.orientation_mode == OrientationMode::Action)
        return 3;
    return 2;
}

nn::ActionBounds action_bounds(const EnvConfig& cfg) {
    std::vector<double> lo(static_cast<std::size_t>(action_dims(cfg)), -kDisplacementBound);
    std::vector<double> hi(static_cast<std::size_t>(action_dims(cfg)), kDisplacementBound);
    if (action_dims(cfg) == 3) {
        lo[2] = -kSteerBound;
        hi[2] = kSteerBound;
    }
    return nn::ActionBounds(std::move(lo), std::move(hi));
}

int obs_dim(const EnvConfig& cfg) {
    return 2 * cfg.num_landmarks + 2 * (cfg.num_agents - 1) + 2;
}

int enc_dim(const EnvConfig& cfg) { return cfg.num_agents * obs_dim(cfg); }

double wrap_angle(double theta) {
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    return t;
}

double angle_diff(double a, double b) {
    double d = std::fabs(std::fmod(a - b, kTwoPi));
    if (d > kTwoPi / 2.0) d = kTwoPi - d;
    return d;
}

GlobalState env_reset(const EnvConfig& cfg, Rng& rng) {
    GlobalState s;
    s.agent_pos.resize(static_cast<std::size_t>(cfg.num_agents));
    s.agent_theta.resize(static_cast<std::size_t>(cfg.num_agents));
    s.landmarks.resize(static_cast<std::size_t>(cfg.num_landmarks));
    for (int i = 0; i < cfg.num_agents; ++i) {
        s.agent_pos[static_cast<std::size_t>(i)] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        s.agent_theta[static_cast<std::size_t>(i)] = rng.uniform(0.0, kTwoPi);
    }
    for (int l = 0; l < cfg.num_landmarks; ++l)
        s.landmarks[static_cast<std::size_t>(l)] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return s;
}

StepResult env_step(const EnvConfig& cfg, const GlobalState& state, const JointAction& action) {
    const int D = cfg.num_agents;
    if (static_cast<int>(action.size()) != D)
        throw contract_error("joint action has wrong number of agents");
    const nn::ActionBounds bounds = action_bounds(cfg);
    for (int i = 0; i < D; ++i) {
        const auto& a = action[static_cast<std::size_t>(i)];
        if (static_cast<int>(a.size()) != bounds.dims())
            throw contract_error("action dimension mismatch for agent " + std::to_string(i));
        for (int d = 0; d < bounds.dims(); ++d) {
            double v = a[static_cast<std::size_t>(d)];
            if (v < bounds.lo[static_cast<std::size_t>(d)] ||
                v > bounds.hi[static_cast<std::size_t>(d)])
                throw contract_error("action component out of bounds; callers must pre-clip");
        }
    }

    StepResult out;
    out.next = state;
    for (int i = 0; i < D; ++i) {
        const auto& a = action[static_cast<std::size_t>(i)];
        auto& p = out.next.agent_pos[static_cast<std::size_t>(i)];
        p.x = clamp_unit(p.x + a[0]);
        p.y = clamp_unit(p.y + a[1]);
        auto& theta = out.next.agent_theta[static_cast<std::size_t>(i)];
        if (cfg.variant == Variant::Coord) {
            if (cfg.orientation_mode == OrientationMode::Action) {
                theta = wrap_angle(theta + a[2]);
            } else if (norm2(a[0], a[1]) > 1e-12) {
                theta = wrap_angle(std::atan2(a[1], a[0]));
            }
        }
    }

    double r = reward_from_encoding(cfg, encode_global(cfg, out.next));
    out.rewards.assign(static_cast<std::size_t>(D), r);
    return out;
}

double reward_spread(const EnvConfig& cfg, const GlobalState& state) {
    EnvConfig spread_cfg = cfg;
    spread_cfg.variant = Variant::Spread;
    return reward_from_encoding(spread_cfg, encode_global(spread_cfg, state));
}

double reward_coord(const EnvConfig& cfg, const GlobalState& state) {
    EnvConfig coord_cfg = cfg;
    coord_cfg.variant = Variant::Coord;
    return reward_from_encoding(coord_cfg, encode_global(coord_cfg, state));
}

std::vector<double> observe(const EnvConfig& cfg, const GlobalState& state, int agent) {
    if (agent < 0 || agent >= cfg.num_agents) throw contract_error("invalid agent id");
    std::vector<double> obs;
    obs.reserve(static_cast<std::size_t>(obs_dim(cfg)));
    const Vec2 own = state.agent_pos[static_cast<std::size_t>(agent)];
    for (const Vec2& lm : state.landmarks) {
        obs.push_back(lm.x - own.x);
        obs.push_back(lm.y - own.y);
    }
    for (int j = 0; j < cfg.num_agents; ++j) {
        if (j == agent) continue;
        const Vec2& p = state.agent_pos[static_cast<std::size_t>(j)];
        obs.push_back(p.x - own.x);
        obs.push_back(p.y - own.y);
    }
    obs.push_back(std::cos(state.agent_theta[static_cast<std::size_t>(agent)]));
    obs.push_back(std::sin(state.agent_theta[static_cast<std::size_t>(agent)]));
    return obs;
}

std::vector<double> encode_global(const EnvConfig& cfg, const GlobalState& state) {
    std::vector<double> enc;
    enc.reserve(static_cast<std::size_t>(enc_dim(cfg)));
    for (int i = 0; i < cfg.num_agents; ++i) {
        auto obs = observe(cfg, state, i);
        enc.insert(enc.end(), obs.begin(), obs.end());
    }
    return enc;
}

double reward_from_encoding(const EnvConfig& cfg, std::span<const double> enc) {
    const int D = cfg.num_agents;
    const int L = cfg.num_landmarks;
    const int od = obs_dim(cfg);
    if (static_cast<int>(enc.size()) != D * od)
        throw data_error("encoding length does not match environment layout");

    // Every agent's block carries its own landmark displacements, so the
    // closest-agent distance per landmark is recoverable from the encoding.
    double mean_min_dist = 0.0;
    for (int l = 0; l < L; ++l) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < D; ++i) {
            const double* block = enc.data() + static_cast<std::size_t>(i) * od;
            double d = norm2(block[2 * l], block[2 * l + 1]);
            if (d < best) best = d;
        }
        mean_min_dist += best;
    }
    mean_min_dist /= static_cast<double>(L);
    double r = std::exp(-mean_min_dist);

    if (cfg.variant == Variant::Coord) {
        double mean_angle = 0.0;
        int pairs = 0;
        for (int i = 0; i < D; ++i) {
            const double* bi = enc.data() + static_cast<std::size_t>(i) * od + (od - 2);
            for (int j = i + 1; j < D; ++j) {
                const double* bj = enc.data() + static_cast<std::size_t>(j) * od + (od - 2);
                mean_angle += angle_between(bi[0], bi[1], bj[0], bj[1]);
                ++pairs;
            }
        }
        if (pairs > 0) mean_angle /= static_cast<double>(pairs);
        r *= std::exp(-mean_angle);
    }
    return r;
}

} // namespace dpg::game
