#include <doctest.h>

#include <cmath>
#include <set>

#include "dpg/errors.hpp"
#include "dpg/netsim.hpp"
#include "oracle.hpp"

using namespace dpg;

namespace {

net::Message policy_msg(int agent, std::int64_t step, std::int64_t bits) {
    return net::Message{net::MessageKind::PolicyUpdate, agent, step,
                        std::vector<double>{0.0}, bits};
}

game::EnvConfig tiny_env() {
    game::EnvConfig cfg;
    cfg.variant = game::Variant::Coord;
    cfg.num_agents = 2;
    cfg.num_landmarks = 1;
    return cfg;
}

// Standalone fabric driver: agents push fresh (dummy) local tuples every
// slot and the cycle runs against paper-ratio message sizes.
struct FabricSim {
    game::EnvConfig env = tiny_env();
    nn::Shape actor_shape{{1, 1, nn::Activation::Tanh}};
    net::NetworkSim sim;
    nn::MlpParams actor_a, actor_b;
    std::vector<const nn::MlpParams*> actors;
    std::vector<double> obs, act, next_obs;

    explicit FabricSim(net::NetConfig cfg, std::uint64_t seed = 1)
        : sim(tiny_env(), cfg, actor_shape, seed),
          actor_a(nn::MlpParams::zeros(actor_shape)),
          actor_b(nn::MlpParams::zeros(actor_shape)) {
        actors = {&actor_a, &actor_b};
        sim.seed_initial_policies(actors);
        obs.assign(static_cast<std::size_t>(game::obs_dim(env)), 0.25);
        act.assign(static_cast<std::size_t>(game::action_dims(env)), 0.0);
        next_obs = obs;
    }

    void slot(std::int64_t n) {
        for (int i = 0; i < 2; ++i) sim.offer_local_tuple(i, n, obs, act, next_obs);
        sim.comm_phase(n, actors);
    }
};

net::NetConfig paper_cfg(double lambda) {
    net::NetConfig cfg;
    cfg.lambda = lambda;
    cfg.budget_bits = 15000;
    cfg.tuples_per_cycle = 33;
    cfg.force_paper_ratios = true;
    cfg.quantize_wire = false;
    return cfg;
}

} // namespace

TEST_CASE("channel link") {
    SUBCASE("a budget-sized message needs exactly one successful slot") {
        net::ChannelLink link(0, 1.0, 15000);
        Rng rng(1);
        CHECK_FALSE(link.enqueue(policy_msg(0, 0, 15000)).has_value());
        auto done = link.tick(rng);
        REQUIRE(done.has_value());
        CHECK(done->origin_step == 0);
    }

    SUBCASE("45000 bits at 15000 bits/slot complete after exactly 3 slots") {
        net::ChannelLink link(0, 1.0, 15000);
        Rng rng(2);
        link.enqueue(policy_msg(0, 7, 45000));
        CHECK_FALSE(link.tick(rng).has_value());
        CHECK_FALSE(link.tick(rng).has_value());
        CHECK(link.tick(rng).has_value());
    }

    SUBCASE("access statistics match lambda = exp(-2)") {
        double lambda = std::exp(-2.0);
        net::ChannelLink link(0, lambda, 100);
        Rng rng(5);
        for (int k = 0; k < 100000; ++k) link.tick(rng);
        double expect = lambda * 100000.0;
        CHECK(std::fabs(static_cast<double>(link.successful_slots()) - expect) <= 0.02 * expect);
    }

    SUBCASE("bit conservation: queued plus delivered equals enqueued") {
        net::ChannelLink link(0, 0.4, 1000);
        Rng rng(4);
        std::int64_t pushed = 0;
        Rng sizes(5);
        for (int k = 0; k < 2000; ++k) {
            if (k % 3 == 0) {
                std::int64_t bits = 1 + static_cast<std::int64_t>(sizes.uniform_index(5000));
                auto instant = link.enqueue(policy_msg(0, k, bits));
                CHECK_FALSE(instant.has_value());
                pushed += bits;
            }
            link.tick(rng);
            CHECK(link.enqueued_bits_total() == pushed);
            CHECK(link.queued_bits() + link.delivered_bits_total() == pushed);
        }
    }

    SUBCASE("zero-size messages bypass the queue") {
        net::ChannelLink link(0, 1.0, 100);
        auto instant = link.enqueue(policy_msg(0, 3, 0));
        REQUIRE(instant.has_value());
        CHECK(instant->origin_step == 3);
        CHECK(link.queue_empty());
    }

    SUBCASE("invalid parameters rejected") {
        CHECK_THROWS_AS(net::ChannelLink(0, 0.0, 100), config_error);
        CHECK_THROWS_AS(net::ChannelLink(0, 1.1, 100), config_error);
        CHECK_THROWS_AS(net::ChannelLink(0, 0.5, 0), config_error);
    }
}

TEST_CASE("cycle scheduler") {
    nn::Shape shape{{1, 1, nn::Activation::Tanh}};
    auto actor = nn::MlpParams::zeros(shape);

    SUBCASE("one policy, then K tuples, repeating") {
        net::CycleScheduler sched(33);
        std::vector<net::MessageKind> kinds;
        std::vector<std::int64_t> tuple_origins;
        for (std::int64_t slot = 0; kinds.size() < 40; ++slot) {
            sched.offer_tuple(slot, {1.0, 2.0});
            while (auto msg = sched.next(0, slot, actor, 100, 100)) {
                kinds.push_back(msg->kind);
                if (msg->kind == net::MessageKind::LocalTuple)
                    tuple_origins.push_back(msg->origin_step);
            }
        }
        CHECK(kinds[0] == net::MessageKind::PolicyUpdate);
        for (int k = 1; k <= 33; ++k) CHECK(kinds[static_cast<std::size_t>(k)] == net::MessageKind::LocalTuple);
        CHECK(kinds[34] == net::MessageKind::PolicyUpdate);
        for (std::size_t k = 1; k < tuple_origins.size(); ++k)
            CHECK(tuple_origins[k] > tuple_origins[k - 1]);
    }

    SUBCASE("K=0 yields a policy-only stream") {
        net::CycleScheduler sched(0);
        for (std::int64_t slot = 0; slot < 5; ++slot) {
            auto msg = sched.next(0, slot, actor, 100, 100);
            REQUIRE(msg.has_value());
            CHECK(msg->kind == net::MessageKind::PolicyUpdate);
            CHECK_FALSE(sched.next(0, slot, actor, 100, 100).has_value());
        }
    }

    SUBCASE("at most one policy snapshot per slot") {
        net::CycleScheduler sched(1);
        sched.offer_tuple(0, {1.0});
        auto first = sched.next(0, 0, actor, 100, 100);
        REQUIRE(first.has_value());
        auto tuple = sched.next(0, 0, actor, 100, 100);
        REQUIRE(tuple.has_value());
        CHECK(tuple->kind == net::MessageKind::LocalTuple);
        CHECK_FALSE(sched.next(0, 0, actor, 100, 100).has_value()); // policy again -> wait
    }
}

TEST_CASE("tuple assembler") {
    auto env = tiny_env();
    const int od = game::obs_dim(env);
    const int ad = game::action_dims(env);

    auto tuple_payload = [&](double tag) {
        std::vector<double> p(static_cast<std::size_t>(2 * od + ad), tag);
        return p;
    };

    SUBCASE("emits exactly once when every agent's tuple is present") {
        net::TupleAssembler asm0(0, env, 1000);
        std::vector<double> obs(static_cast<std::size_t>(od), 0.5);
        std::vector<double> act(static_cast<std::size_t>(ad), 0.0);
        asm0.add_own(7, obs, act, obs);
        CHECK(asm0.take_emitted().empty());
        asm0.add_peer(1, 7, tuple_payload(0.5));
        auto out = asm0.take_emitted();
        REQUIRE(out.size() == 1);
        CHECK(out[0].origin_step == 7);
        CHECK(static_cast<int>(out[0].state_enc.size()) == game::enc_dim(env));
        CHECK(out[0].rewards.size() == 2);
        // same step again does not re-emit
        asm0.add_peer(1, 7, tuple_payload(0.5));
        CHECK(asm0.take_emitted().empty());
    }

    SUBCASE("reward equals the encoding reward") {
        net::TupleAssembler asm0(0, env, 1000);
        Rng rng(6);
        std::vector<double> own_obs, own_next, peer_payload;
        for (int k = 0; k < od; ++k) own_obs.push_back(rng.uniform(-1.0, 1.0));
        for (int k = 0; k < od; ++k) own_next.push_back(rng.uniform(-1.0, 1.0));
        for (int k = 0; k < 2 * od + ad; ++k) peer_payload.push_back(rng.uniform(-1.0, 1.0));
        std::vector<double> act(static_cast<std::size_t>(ad), 0.05);
        asm0.add_own(3, own_obs, act, own_next);
        asm0.add_peer(1, 3, peer_payload);
        auto out = asm0.take_emitted();
        REQUIRE(out.size() == 1);
        CHECK(out[0].rewards[0] == game::reward_from_encoding(env, out[0].next_enc));
    }

    SUBCASE("wrong payload length is a data error") {
        net::TupleAssembler asm0(0, env, 1000);
        CHECK_THROWS_AS(asm0.add_peer(1, 0, std::vector<double>{1.0}), data_error);
    }

    SUBCASE("own history is pruned") {
        net::TupleAssembler asm0(0, env, 10);
        std::vector<double> obs(static_cast<std::size_t>(od), 0.0);
        std::vector<double> act(static_cast<std::size_t>(ad), 0.0);
        for (std::int64_t m = 0; m < 100; ++m) asm0.add_own(m, obs, act, obs);
        CHECK(asm0.own_store_size() <= 11);
    }
}

TEST_CASE("policy cache ordering") {
    nn::Shape shape{{1, 1, nn::Activation::Tanh}};
    net::PolicyCache cache;
    auto p = nn::MlpParams::zeros(shape);

    CHECK_THROWS_AS(cache.get(1), not_initialized_error);
    CHECK(cache.update_if_newer(1, p, 5));
    CHECK_FALSE(cache.update_if_newer(1, p, 5)); // equal origin discarded
    CHECK_FALSE(cache.update_if_newer(1, p, 3)); // older discarded
    CHECK(cache.update_if_newer(1, p, 9));
    CHECK(cache.age(1, 20) == 11);
}

TEST_CASE("deterministic sawtooth at lambda = 1") {
    // paper-ratio sizes: a policy takes 3 slots, each tuple 1 slot, so one
    // full cycle spans 36 slots between policy deliveries.
    FabricSim fab(paper_cfg(1.0));
    CHECK(fab.sim.policy_fragments() == 3);
    CHECK(fab.sim.tuple_fragments() == 1);

    std::vector<std::int64_t> tau;
    for (std::int64_t n = 0; n < 200; ++n) {
        fab.slot(n);
        auto row = fab.sim.tau_row(n);
        CHECK(row[0] == row[1]); // symmetric setup
        tau.push_back(row[0]);
    }

    CHECK(tau[0] == 0);
    CHECK(tau[1] == 1);
    for (std::int64_t n = 2; n < 200; ++n) CHECK(tau[static_cast<std::size_t>(n)] == 2 + (n - 2) % 36);

    // refresh period and peak of the steady sawtooth
    std::int64_t peak = *std::max_element(tau.begin() + 2, tau.end());
    CHECK(peak == 37);
    CHECK(peak <= 39);
}

TEST_CASE("tau monotonicity between refreshes") {
    FabricSim fab(paper_cfg(std::exp(-1.0)), 77);
    std::int64_t prev01 = 0;
    int refreshes = 0;
    for (std::int64_t n = 0; n < 5000; ++n) {
        fab.slot(n);
        std::int64_t t01 = fab.sim.tau_row(n)[0];
        CHECK(t01 >= 0);
        if (n > 0) CHECK(t01 <= prev01 + 1); // grows by one or drops to a delivery age
        if (n > 0 && t01 <= prev01) ++refreshes;
        prev01 = t01;
    }
    CHECK(refreshes > 10);
}

TEST_CASE("wire quantization") {
    net::NetConfig cfg = paper_cfg(1.0);
    cfg.quantize_wire = true;
    cfg.tuples_per_cycle = 0;
    cfg.policy_bits_override = 100; // one fragment

    game::EnvConfig env = tiny_env();
    nn::Shape shape{{1, 1, nn::Activation::Tanh}};
    net::NetworkSim sim(env, cfg, shape, 5);
    nn::MlpParams a = nn::MlpParams::zeros(shape);
    nn::MlpParams b = nn::MlpParams::zeros(shape);
    a.set_values({0.1, 0.2}); // 0.1 and 0.2 are not float-representable
    b.set_values({0.3, 0.4});
    std::vector<const nn::MlpParams*> actors{&a, &b};
    sim.seed_initial_policies(actors);
    sim.comm_phase(0, actors);
    sim.comm_phase(1, actors);

    const auto& delivered = sim.cache(1).get(0).params.values();
    CHECK(delivered[0] == static_cast<double>(static_cast<float>(0.1)));
    CHECK(delivered[0] != 0.1);
}

TEST_CASE("dominance check") {
    SUBCASE("constant zero is dominated by anything nonnegative") {
        std::vector<std::int64_t> samples(2000, 0);
        auto rep = net::dominance_check(samples, [](std::int64_t) { return 0.0; });
        CHECK(rep.enough_data);
        CHECK(rep.dominated);
    }

    SUBCASE("too few samples is an insufficient-data signal") {
        std::vector<std::int64_t> samples(100, 0);
        auto rep = net::dominance_check(samples, [](std::int64_t) { return 1.0; });
        CHECK_FALSE(rep.enough_data);
    }

    SUBCASE("fabric tau under a Bernoulli channel is dominated by the analytic tail") {
        double lambda = std::exp(-1.0);
        FabricSim fab(paper_cfg(lambda), 123);
        std::vector<std::int64_t> samples;
        for (std::int64_t n = 0; n < 20000; ++n) {
            fab.slot(n);
            for (auto t : fab.sim.tau_row(n)) samples.push_back(t);
        }
        int successes = static_cast<int>(2 * fab.sim.policy_fragments() +
                                         33 * fab.sim.tuple_fragments());
        auto rep = net::dominance_check(samples, [&](std::int64_t m) {
            return net::negbinom_trials_tail(m, successes, lambda);
        });
        CHECK(rep.enough_data);
        CHECK(rep.dominated);
        CHECK(rep.worst_margin >= 0.0);
    }

    SUBCASE("injected stalls break dominance") {
        // the same fabric, but the empirical series gets artificial spikes
        double lambda = std::exp(-1.0);
        FabricSim fab(paper_cfg(lambda), 123);
        std::vector<std::int64_t> samples;
        for (std::int64_t n = 0; n < 5000; ++n) {
            fab.slot(n);
            for (auto t : fab.sim.tau_row(n)) samples.push_back(t + 500);
        }
        int successes = static_cast<int>(2 * fab.sim.policy_fragments() +
                                         33 * fab.sim.tuple_fragments());
        auto rep = net::dominance_check(samples, [&](std::int64_t m) {
            return net::negbinom_trials_tail(m, successes, lambda);
        });
        CHECK(rep.enough_data);
        CHECK_FALSE(rep.dominated);
        CHECK(rep.worst_margin < 0.0);
    }

    SUBCASE("negative binomial tail sanity") {
        CHECK(net::negbinom_trials_tail(2, 3, 0.5) == 1.0);  // fewer trials than successes
        CHECK(net::negbinom_trials_tail(10, 3, 1.0) == 0.0); // certain channel
        // three successes in m fair trials: P(T > 3) = 1 - p^3
        CHECK(net::negbinom_trials_tail(3, 3, 0.5) == doctest::Approx(1.0 - 0.125).epsilon(1e-12));
        // monotone decreasing in m
        double prev = 1.0;
        for (std::int64_t m = 0; m < 200; ++m) {
            double tail = net::negbinom_trials_tail(m, 5, 0.3);
            CHECK(tail <= prev + 1e-12);
            prev = tail;
        }
    }
}

TEST_CASE("staleness gradient error") {
    ac::GameLayout lay{2, 3, 2, nn::ActionBounds::uniform(2, -0.5, 0.5)};
    Rng rng(50);
    ac::AgentLearner learner(0, ac::Algo::ThreeDpg, lay, {4}, {5}, rng);
    ac::AgentLearner peer(1, ac::Algo::ThreeDpg, lay, {4}, {5}, rng);

    game::GlobalTransition t;
    for (int k = 0; k < lay.enc_dim(); ++k) t.state_enc.push_back(rng.uniform(-1.0, 1.0));
    for (int k = 0; k < lay.enc_dim(); ++k) t.next_enc.push_back(rng.uniform(-1.0, 1.0));
    for (int k = 0; k < lay.joint_act_dim(); ++k) t.action.push_back(rng.uniform(-0.5, 0.5));
    t.rewards = {0.4, 0.4};

    SUBCASE("aged == fresh gives zero norms") {
        net::PolicyCache fresh, aged;
        fresh.update_if_newer(1, peer.actor, 5);
        aged.update_if_newer(1, peer.actor, 5);
        auto norms = net::staleness_gradient_error(learner, fresh, aged, t, 0.9);
        CHECK(norms.critic == 0.0);
        CHECK(norms.actor == 0.0);
    }

    SUBCASE("hand-checked single-parameter difference") {
        ac::GameLayout slay{2, 1, 1, nn::ActionBounds::uniform(1, -1.0, 1.0)};
        Rng r2(51);
        ac::AgentLearner l(0, ac::Algo::ThreeDpg, slay, {}, {}, r2);
        // critic Q = a0 + a1 (weights 1 on both action slots only)
        l.critic.set_values({0.0, 0.0, 1.0, 1.0, 0.0});
        l.critic_target.set_values({0.0, 0.0, 1.0, 1.0, 0.0});
        l.actor.set_values({0.0, 0.0});
        l.actor_target.set_values({0.0, 0.0});

        nn::Shape ashape = l.actor.shape();
        nn::MlpParams fresh_peer = nn::MlpParams::zeros(ashape);
        nn::MlpParams aged_peer = nn::MlpParams::zeros(ashape);
        fresh_peer.set_values({0.0, 0.5});
        aged_peer.set_values({0.0, -0.5});

        net::PolicyCache fresh, aged;
        fresh.update_if_newer(1, fresh_peer, 10);
        aged.update_if_newer(1, aged_peer, 2);

        game::GlobalTransition tt;
        tt.state_enc = {0.3, 0.3};
        tt.next_enc = {0.2, 0.2};
        tt.action = {0.1, 0.1};
        tt.rewards = {0.0, 0.0};

        auto norms = net::staleness_gradient_error(l, fresh, aged, tt, 0.9);
        // actor gradient is unaffected by the peer here (critic is additive in
        // actions), but the critic TD target shifts by gamma * (tanh(0.5) - tanh(-0.5))
        double shift = 0.9 * (std::tanh(0.5) - std::tanh(-0.5));
        // grad Q wrt critic params at (s,a): (s0,s1,a0,a1,1) -> norm scales the shift
        double gnorm = std::sqrt(0.3 * 0.3 + 0.3 * 0.3 + 0.1 * 0.1 + 0.1 * 0.1 + 1.0);
        CHECK(norms.critic == doctest::Approx(shift * gnorm).epsilon(1e-12));
        CHECK(norms.actor == doctest::Approx(0.0).epsilon(1e-15));
    }
}
