#include <doctest.h>

#include <cmath>

#include "dpg/errors.hpp"
#include "dpg/game.hpp"
#include "oracle.hpp"

using namespace dpg;

namespace {

game::EnvConfig coord_cfg() {
    game::EnvConfig cfg;
    cfg.variant = game::Variant::Coord;
    cfg.num_agents = 2;
    cfg.num_landmarks = 3;
    return cfg;
}

game::EnvConfig spread_cfg() {
    game::EnvConfig cfg;
    cfg.variant = game::Variant::Spread;
    cfg.num_agents = 2;
    cfg.num_landmarks = 3;
    return cfg;
}

game::JointAction zero_action(const game::EnvConfig& cfg) {
    return game::JointAction(static_cast<std::size_t>(cfg.num_agents),
                             std::vector<double>(static_cast<std::size_t>(game::action_dims(cfg)),
                                                 0.0));
}

} // namespace

TEST_CASE("env_reset") {
    auto cfg = coord_cfg();

    SUBCASE("same seed twice gives the identical state") {
        Rng r1(7), r2(7);
        auto a = game::env_reset(cfg, r1);
        auto b = game::env_reset(cfg, r2);
        for (int i = 0; i < cfg.num_agents; ++i) {
            CHECK(a.agent_pos[static_cast<std::size_t>(i)].x == b.agent_pos[static_cast<std::size_t>(i)].x);
            CHECK(a.agent_theta[static_cast<std::size_t>(i)] == b.agent_theta[static_cast<std::size_t>(i)]);
        }
        for (int l = 0; l < cfg.num_landmarks; ++l)
            CHECK(a.landmarks[static_cast<std::size_t>(l)].y == b.landmarks[static_cast<std::size_t>(l)].y);
    }

    SUBCASE("coordinates stay in the unit box; orientation in [0,2pi)") {
        Rng rng(11);
        for (int k = 0; k < 200; ++k) {
            auto s = game::env_reset(cfg, rng);
            for (const auto& p : s.agent_pos) {
                CHECK(p.x >= -1.0);
                CHECK(p.x <= 1.0);
                CHECK(p.y >= -1.0);
                CHECK(p.y <= 1.0);
            }
            for (double t : s.agent_theta) {
                CHECK(t >= 0.0);
                CHECK(t < 6.2832);
            }
            for (const auto& p : s.landmarks) {
                CHECK(std::fabs(p.x) <= 1.0);
                CHECK(std::fabs(p.y) <= 1.0);
            }
        }
    }

    SUBCASE("coordinate means are near zero over many resets") {
        Rng rng(13);
        double sum = 0.0;
        std::size_t count = 0;
        for (int k = 0; k < 10000; ++k) {
            auto s = game::env_reset(cfg, rng);
            for (const auto& p : s.agent_pos) {
                sum += p.x + p.y;
                count += 2;
            }
            for (const auto& p : s.landmarks) {
                sum += p.x + p.y;
                count += 2;
            }
        }
        CHECK(std::fabs(sum / static_cast<double>(count)) <= 0.02);
    }
}

TEST_CASE("env_step") {
    auto cfg = coord_cfg();
    Rng rng(5);
    auto state = game::env_reset(cfg, rng);

    SUBCASE("zero action leaves the state unchanged") {
        auto out = game::env_step(cfg, state, zero_action(cfg));
        for (int i = 0; i < cfg.num_agents; ++i) {
            CHECK(out.next.agent_pos[static_cast<std::size_t>(i)].x ==
                  state.agent_pos[static_cast<std::size_t>(i)].x);
            CHECK(out.next.agent_pos[static_cast<std::size_t>(i)].y ==
                  state.agent_pos[static_cast<std::size_t>(i)].y);
            CHECK(out.next.agent_theta[static_cast<std::size_t>(i)] ==
                  state.agent_theta[static_cast<std::size_t>(i)]);
        }
    }

    SUBCASE("positions clamp at the box edge") {
        state.agent_pos[0] = {0.99, 0.0};
        auto action = zero_action(cfg);
        action[0][0] = 0.1;
        auto out = game::env_step(cfg, state, action);
        CHECK(out.next.agent_pos[0].x == 1.0);
        CHECK(out.next.agent_pos[0].y == 0.0);
    }

    SUBCASE("random walks never leave the box") {
        Rng walk(17);
        auto s = state;
        for (int k = 0; k < 1000; ++k) {
            game::JointAction a(2);
            for (auto& ai : a)
                ai = {walk.uniform(-0.1, 0.1), walk.uniform(-0.1, 0.1), walk.uniform(-0.25, 0.25)};
            s = game::env_step(cfg, s, a).next;
            for (const auto& p : s.agent_pos) {
                CHECK(std::fabs(p.x) <= 1.0);
                CHECK(std::fabs(p.y) <= 1.0);
            }
            for (double t : s.agent_theta) {
                CHECK(t >= 0.0);
                CHECK(t < 6.2832);
            }
        }
    }

    SUBCASE("out-of-bound action components rejected") {
        auto action = zero_action(cfg);
        action[1][0] = 0.11;
        CHECK_THROWS_AS(game::env_step(cfg, state, action), contract_error);
        action[1][0] = 0.0;
        action[0][2] = -0.26;
        CHECK_THROWS_AS(game::env_step(cfg, state, action), contract_error);
    }

    SUBCASE("dynamics are deterministic") {
        Rng walk(19);
        game::JointAction a(2);
        for (auto& ai : a)
            ai = {walk.uniform(-0.1, 0.1), walk.uniform(-0.1, 0.1), walk.uniform(-0.25, 0.25)};
        auto o1 = game::env_step(cfg, state, a);
        auto o2 = game::env_step(cfg, state, a);
        CHECK(o1.rewards[0] == o2.rewards[0]);
        CHECK(o1.next.agent_pos[1].x == o2.next.agent_pos[1].x);
    }
}

TEST_CASE("reward_spread") {
    auto cfg = spread_cfg();
    game::GlobalState s;
    s.agent_pos = {{0.25, -0.5}, {0.5, 0.5}};
    s.agent_theta = {0.0, 0.0};
    s.landmarks = {{0.25, -0.5}, {0.5, 0.5}, {0.25, -0.5}};

    SUBCASE("coincident landmarks give the maximum reward 1") {
        CHECK(game::reward_spread(cfg, s) == 1.0);
    }

    SUBCASE("single agent and landmark at distance 1 gives exp(-1)") {
        game::EnvConfig one = cfg;
        one.num_agents = 1;
        one.num_landmarks = 1;
        game::GlobalState t;
        t.agent_pos = {{0.0, 0.0}};
        t.agent_theta = {0.0};
        t.landmarks = {{1.0, 0.0}};
        CHECK(game::reward_spread(one, t) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    }

    SUBCASE("matches a brute-force min/mean oracle on random states") {
        Rng rng(23);
        for (int trial = 0; trial < 50; ++trial) {
            game::GlobalState t;
            for (int i = 0; i < 2; ++i) {
                t.agent_pos.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
                t.agent_theta.push_back(rng.uniform(0.0, 6.28));
            }
            for (int l = 0; l < 3; ++l)
                t.landmarks.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});

            double sum = 0.0;
            for (const auto& lm : t.landmarks) {
                double best = 1e300;
                for (const auto& ap : t.agent_pos) {
                    double d = std::sqrt((ap.x - lm.x) * (ap.x - lm.x) +
                                         (ap.y - lm.y) * (ap.y - lm.y));
                    best = std::min(best, d);
                }
                sum += best;
            }
            double expect = std::exp(-sum / 3.0);
            CHECK(game::reward_spread(cfg, t) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    SUBCASE("rewards live in (0,1]") {
        Rng rng(29);
        for (int trial = 0; trial < 200; ++trial) {
            auto t = game::env_reset(cfg, rng);
            double r = game::reward_spread(cfg, t);
            CHECK(r > 0.0);
            CHECK(r <= 1.0);
        }
    }
}

TEST_CASE("reward_coord") {
    auto cfg = coord_cfg();
    Rng rng(31);
    auto s = game::env_reset(cfg, rng);

    SUBCASE("identical orientations reduce to the spread reward") {
        s.agent_theta = {1.234, 1.234};
        CHECK(game::reward_coord(cfg, s) == game::reward_spread(cfg, s));
    }

    SUBCASE("opposed orientations scale by exp(-pi)") {
        s.agent_theta = {0.0, 3.14159265358979323846};
        double expect = game::reward_spread(cfg, s) * std::exp(-3.14159265358979323846);
        CHECK(game::reward_coord(cfg, s) == doctest::Approx(expect).epsilon(1e-12));
    }

    SUBCASE("angular difference wraps") {
        CHECK(game::angle_diff(0.1, 2.0 * 3.14159265358979323846 - 0.1) ==
              doctest::Approx(0.2).epsilon(1e-12));
        CHECK(game::angle_diff(0.3, 1.1) == game::angle_diff(1.1, 0.3));
    }

    SUBCASE("never exceeds the spread reward; equal only when aligned") {
        Rng r2(37);
        for (int trial = 0; trial < 200; ++trial) {
            auto t = game::env_reset(cfg, r2);
            double rc = game::reward_coord(cfg, t);
            double rs = game::reward_spread(cfg, t);
            CHECK(rc <= rs);
            double dtheta = game::angle_diff(t.agent_theta[0], t.agent_theta[1]);
            if (dtheta > 1e-9) CHECK(rc < rs);
        }
    }
}

TEST_CASE("observe") {
    auto cfg = coord_cfg();
    Rng rng(41);
    auto s = game::env_reset(cfg, rng);

    SUBCASE("dimension matches 2L + 2(D-1) + 2") {
        auto obs = game::observe(cfg, s, 0);
        CHECK(static_cast<int>(obs.size()) == 2 * 3 + 2 * 1 + 2);
        CHECK(static_cast<int>(obs.size()) == game::obs_dim(cfg));
    }

    SUBCASE("an agent sitting on a landmark sees a zero displacement") {
        s.agent_pos[0] = s.landmarks[1];
        auto obs = game::observe(cfg, s, 0);
        CHECK(obs[2] == 0.0);
        CHECK(obs[3] == 0.0);
    }

    SUBCASE("relative entries are translation invariant") {
        auto base = game::observe(cfg, s, 1);
        auto shifted = s;
        double cx = 0.173, cy = -0.294;
        for (auto& p : shifted.agent_pos) {
            p.x += cx;
            p.y += cy;
        }
        for (auto& p : shifted.landmarks) {
            p.x += cx;
            p.y += cy;
        }
        auto moved = game::observe(cfg, shifted, 1);
        // all entries but the trailing (cos, sin) pair are relative
        for (std::size_t k = 0; k + 2 < base.size(); ++k)
            CHECK(std::fabs(base[k] - moved[k]) <= 1e-12);
    }

    SUBCASE("invalid agent id rejected") {
        CHECK_THROWS_AS(game::observe(cfg, s, 2), contract_error);
    }
}

TEST_CASE("encoding round trip") {
    auto cfg = coord_cfg();
    Rng rng(43);

    SUBCASE("encode_global concatenates observations in agent order") {
        auto s = game::env_reset(cfg, rng);
        auto enc = game::encode_global(cfg, s);
        auto o0 = game::observe(cfg, s, 0);
        auto o1 = game::observe(cfg, s, 1);
        REQUIRE(enc.size() == o0.size() + o1.size());
        for (std::size_t k = 0; k < o0.size(); ++k) CHECK(enc[k] == o0[k]);
        for (std::size_t k = 0; k < o1.size(); ++k) CHECK(enc[o0.size() + k] == o1[k]);
    }

    SUBCASE("reward from the encoding is bit-identical to the state reward") {
        for (int trial = 0; trial < 100; ++trial) {
            auto s = game::env_reset(cfg, rng);
            auto enc = game::encode_global(cfg, s);
            CHECK(game::reward_from_encoding(cfg, enc) == game::reward_coord(cfg, s));
        }
    }

    SUBCASE("env_step rewards equal the successor-state reward") {
        auto s = game::env_reset(cfg, rng);
        auto out = game::env_step(cfg, s, zero_action(cfg));
        CHECK(out.rewards[0] == game::reward_coord(cfg, out.next));
        CHECK(out.rewards[0] == out.rewards[1]);
    }

    SUBCASE("wrong encoding length rejected") {
        std::vector<double> bad(static_cast<std::size_t>(game::enc_dim(cfg)) - 1, 0.0);
        CHECK_THROWS_AS(game::reward_from_encoding(cfg, bad), data_error);
    }
}

TEST_CASE("heading orientation mode") {
    auto cfg = coord_cfg();
    cfg.orientation_mode = game::OrientationMode::Heading;
    CHECK(game::action_dims(cfg) == 2);

    Rng rng(47);
    auto s = game::env_reset(cfg, rng);
    game::JointAction a(2, {0.1, 0.0});
    auto out = game::env_step(cfg, s, a);
    CHECK(out.next.agent_theta[0] == doctest::Approx(0.0).epsilon(1e-15));

    game::JointAction still(2, {0.0, 0.0});
    auto out2 = game::env_step(cfg, out.next, still);
    CHECK(out2.next.agent_theta[0] == out.next.agent_theta[0]);
}
