#include "dpg/harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>

#include "dpg/csv.hpp"
#include "dpg/errors.hpp"

namespace dpg::harness {

namespace fs = std::filesystem;

namespace {

// Substream ids for the per-seed generators. Fixed so that centralized and
// networked runs draw identical env/noise/minibatch streams.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamEnv = 2;
constexpr std::uint64_t kStreamNet = 3;
constexpr std::uint64_t kStreamOuBase = 100;
constexpr std::uint64_t kStreamMinibatchBase = 200;

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<int> to_int_vec(const std::vector<std::int64_t>& v) {
    std::vector<int> out;
    out.reserve(v.size());
    for (auto x : v) out.push_back(static_cast<int>(x));
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

double parse_lr_numerator(const std::string& text) {
    if (text == "exp(-6)") return std::exp(-6.0);
    try {
        std::size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos != text.size()) throw config_error("");
        return v;
    } catch (...) {
        throw config_error("hp.lr_numerator must be a number or the literal exp(-6): " + text);
    }
}

} // namespace

void RunConfig::validate() const {
    if (env.num_agents < 1) throw config_error("env.num_agents must be >= 1");
    if (env.num_landmarks < 1) throw config_error("env.num_landmarks must be >= 1");
    if (env.horizon < 1) throw config_error("env.horizon must be >= 1");
    if (epochs < 0) throw config_error("epochs must be >= 0");
    if (seeds.empty()) throw config_error("at least one seed is required");
    if (hp.minibatch < 1) throw config_error("hp.minibatch must be >= 1");
    if (hp.replay_capacity < static_cast<std::size_t>(hp.minibatch))
        throw config_error("hp.replay_capacity must be >= hp.minibatch");
    if (!(hp.gamma > 0.0 && hp.gamma < 1.0)) throw config_error("hp.gamma must lie in (0,1)");
    if (!(hp.tau_soft > 0.0 && hp.tau_soft <= 1.0))
        throw config_error("hp.tau_soft must lie in (0,1]");
    if (mode == Mode::Networked && !net)
        throw config_error("networked mode requires a net.* block");
    if (mode == Mode::Networked && algo == ac::Algo::Maddpg)
        throw config_error("MADDPG is a centralized-training baseline; networked mode is not supported");
}

RunConfig RunConfig::from_config(const KeyValueConfig& kv) {
    RunConfig cfg;

    bool has_net_block = kv.has("net.lambda") || kv.has("net.budget_bits") ||
                         kv.has("net.tuples_per_cycle") || kv.has("net.force_paper_ratios");
    std::string mode_s = lower(kv.get_string("mode", has_net_block ? "networked" : "centralized"));
    if (mode_s == "centralized") cfg.mode = Mode::Centralized;
    else if (mode_s == "networked") cfg.mode = Mode::Networked;
    else throw config_error("mode must be centralized or networked");

    std::string algo_s = lower(kv.get_string("algo", "3dpg"));
    if (algo_s == "3dpg") cfg.algo = ac::Algo::ThreeDpg;
    else if (algo_s == "maddpg") cfg.algo = ac::Algo::Maddpg;
    else throw config_error("algo must be 3dpg or maddpg");

    cfg.epochs = kv.get_int("epochs", cfg.epochs);
    if (kv.has("seeds")) {
        cfg.seeds.clear();
        for (auto s : kv.get_int_list("seeds")) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }

    std::string variant = lower(kv.get_string("env.variant", "coord"));
    if (variant == "spread") cfg.env.variant = game::Variant::Spread;
    else if (variant == "coord") cfg.env.variant = game::Variant::Coord;
    else throw config_error("env.variant must be spread or coord");
    cfg.env.num_agents = static_cast<int>(kv.get_int("env.num_agents", 2));
    cfg.env.num_landmarks = static_cast<int>(kv.get_int("env.num_landmarks", 3));
    cfg.env.horizon = static_cast<int>(kv.get_int("env.horizon", 25));
    std::string omode = lower(kv.get_string("env.orientation_mode", "action"));
    if (omode == "action") cfg.env.orientation_mode = game::OrientationMode::Action;
    else if (omode == "heading") cfg.env.orientation_mode = game::OrientationMode::Heading;
    else throw config_error("env.orientation_mode must be action or heading");

    cfg.hp.gamma = kv.get_double("hp.gamma", cfg.hp.gamma);
    cfg.hp.minibatch = static_cast<int>(kv.get_int("hp.minibatch", cfg.hp.minibatch));
    cfg.hp.replay_capacity =
        static_cast<std::size_t>(kv.get_int("hp.replay_capacity",
                                            static_cast<std::int64_t>(cfg.hp.replay_capacity)));
    cfg.hp.tau_soft = kv.get_double("hp.tau_soft", cfg.hp.tau_soft);
    cfg.hp.schedule.numerator = parse_lr_numerator(kv.get_string("hp.lr_numerator", "exp(-6)"));
    cfg.hp.schedule.decay_scale = kv.get_double("hp.lr_decay_scale", cfg.hp.schedule.decay_scale);
    cfg.hp.ou_theta = kv.get_double("hp.ou_theta", cfg.hp.ou_theta);
    cfg.hp.ou_sigma = kv.get_double("hp.ou_sigma", cfg.hp.ou_sigma);
    cfg.hp.ou_dt = kv.get_double("hp.ou_dt", cfg.hp.ou_dt);
    cfg.hp.actor_widths = to_int_vec(kv.get_int_list("hp.actor_widths", {64, 8}));
    cfg.hp.critic_widths = to_int_vec(kv.get_int_list("hp.critic_widths", {128, 32}));
    cfg.hp.param_norm_ceiling = kv.get_double("hp.param_norm_ceiling", cfg.hp.param_norm_ceiling);

    if (has_net_block || kv.has("net.quantize_wire") || kv.has("net.policy_bits_override") ||
        kv.has("net.tuple_bits_override")) {
        net::NetConfig nc;
        nc.lambda = kv.get_double("net.lambda", nc.lambda);
        if (kv.has("net.lambda_list")) nc.lambda_per_agent = kv.get_double_list("net.lambda_list");
        nc.budget_bits = kv.get_int("net.budget_bits", nc.budget_bits);
        nc.tuples_per_cycle = static_cast<int>(kv.get_int("net.tuples_per_cycle", nc.tuples_per_cycle));
        nc.force_paper_ratios = kv.get_bool("net.force_paper_ratios", nc.force_paper_ratios);
        nc.quantize_wire = kv.get_bool("net.quantize_wire", nc.quantize_wire);
        nc.policy_bits_override = kv.get_int("net.policy_bits_override", nc.policy_bits_override);
        nc.tuple_bits_override = kv.get_int("net.tuple_bits_override", nc.tuple_bits_override);
        nc.own_history_cap = kv.get_int("net.own_history_cap", nc.own_history_cap);
        cfg.net = nc;
    }

    cfg.diag.grad_error = kv.get_bool("diag.grad_error", cfg.diag.grad_error);

    auto unread = kv.unread_keys();
    if (!unread.empty()) {
        std::string msg = "unrecognized config keys:";
        for (const auto& k : unread) msg += " " + k;
        throw config_error(msg);
    }

    cfg.validate();
    return cfg;
}

KeyValueConfig RunConfig::to_config() const {
    KeyValueConfig kv;
    kv.set("mode", mode == Mode::Centralized ? "centralized" : "networked");
    kv.set("algo", algo == ac::Algo::ThreeDpg ? "3dpg" : "maddpg");
    kv.set("epochs", std::to_string(epochs));
    {
        std::string s;
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(seeds[i]);
        }
        kv.set("seeds", s);
    }
    kv.set("env.variant", env.variant == game::Variant::Spread ? "spread" : "coord");
    kv.set("env.num_agents", std::to_string(env.num_agents));
    kv.set("env.num_landmarks", std::to_string(env.num_landmarks));
    kv.set("env.horizon", std::to_string(env.horizon));
    kv.set("env.orientation_mode",
           env.orientation_mode == game::OrientationMode::Action ? "action" : "heading");
    kv.set("hp.gamma", csv_double(hp.gamma));
    kv.set("hp.minibatch", std::to_string(hp.minibatch));
    kv.set("hp.replay_capacity", std::to_string(hp.replay_capacity));
    kv.set("hp.tau_soft", csv_double(hp.tau_soft));
    kv.set("hp.lr_numerator", csv_double(hp.schedule.numerator));
    kv.set("hp.lr_decay_scale", csv_double(hp.schedule.decay_scale));
    kv.set("hp.ou_theta", csv_double(hp.ou_theta));
    kv.set("hp.ou_sigma", csv_double(hp.ou_sigma));
    kv.set("hp.ou_dt", csv_double(hp.ou_dt));
    kv.set("hp.actor_widths", join_ints(hp.actor_widths));
    kv.set("hp.critic_widths", join_ints(hp.critic_widths));
    kv.set("hp.param_norm_ceiling", csv_double(hp.param_norm_ceiling));
    if (net) {
        kv.set("net.lambda", csv_double(net->lambda));
        if (!net->lambda_per_agent.empty()) {
            std::string s;
            for (std::size_t i = 0; i < net->lambda_per_agent.size(); ++i) {
                if (i) s += ",";
                s += csv_double(net->lambda_per_agent[i]);
            }
            kv.set("net.lambda_list", s);
        }
        kv.set("net.budget_bits", std::to_string(net->budget_bits));
        kv.set("net.tuples_per_cycle", std::to_string(net->tuples_per_cycle));
        kv.set("net.force_paper_ratios", net->force_paper_ratios ? "true" : "false");
        kv.set("net.quantize_wire", net->quantize_wire ? "true" : "false");
        kv.set("net.policy_bits_override", std::to_string(net->policy_bits_override));
        kv.set("net.tuple_bits_override", std::to_string(net->tuple_bits_override));
        kv.set("net.own_history_cap", std::to_string(net->own_history_cap));
    }
    kv.set("diag.grad_error", diag.grad_error ? "true" : "false");
    return kv;
}

namespace {

std::vector<std::string> metrics_columns(int num_agents) {
    std::vector<std::string> cols{"epoch", "mean_reward"};
    for (int i = 0; i < num_agents; ++i) cols.push_back("reward_a" + std::to_string(i + 1));
    cols.insert(cols.end(), {"aoi_tau_max", "aoi_tau_mean", "delta_max", "grad_err_critic",
                             "grad_err_actor", "param_norm_max"});
    return cols;
}

std::vector<std::string> aoi_columns(int num_agents) {
    std::vector<std::string> cols{"slot"};
    for (int i = 0; i < num_agents; ++i)
        for (int j = 0; j < num_agents; ++j) {
            if (i == j) continue;
            cols.push_back("tau_" + std::to_string(i + 1) + std::to_string(j + 1));
        }
    for (int i = 0; i < num_agents; ++i) cols.push_back("delta_" + std::to_string(i + 1));
    return cols;
}

void write_params_file(const fs::path& path, const nn::MlpParams& actor,
                       const nn::MlpParams& critic) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write " + path.string());
    auto dump = [&out](const char* name, const nn::MlpParams& p) {
        out << name << " layers " << p.shape().size() << "\n";
        for (const auto& l : p.shape())
            out << l.input_dim << " " << l.output_dim << " "
                << (l.activation == nn::Activation::Gelu
                        ? "gelu"
                        : (l.activation == nn::Activation::Tanh ? "tanh" : "identity"))
                << "\n";
        out << "values " << p.param_count() << "\n";
        for (double v : p.values()) out << csv_double(v) << "\n";
    };
    dump("actor", actor);
    dump("critic", critic);
}

struct EpochAoi {
    std::int64_t tau_max = 0;
    double tau_sum = 0.0;
    std::size_t tau_count = 0;
    std::int64_t delta_max = 0;
};

SeedResult run_one_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& seed_dir) {
    SeedResult result;
    result.seed = seed;

    const auto& env_cfg = cfg.env;
    const int D = env_cfg.num_agents;
    const int horizon = env_cfg.horizon;
    const bool networked = cfg.mode == Mode::Networked;

    ac::GameLayout layout{D, game::obs_dim(env_cfg), game::action_dims(env_cfg),
                          game::action_bounds(env_cfg)};

    Rng init_rng = Rng::substream(seed, kStreamInit);
    Rng env_rng = Rng::substream(seed, kStreamEnv);
    std::vector<Rng> ou_rngs, mb_rngs;
    for (int i = 0; i < D; ++i) {
        ou_rngs.push_back(Rng::substream(seed, kStreamOuBase + static_cast<std::uint64_t>(i)));
        mb_rngs.push_back(Rng::substream(seed, kStreamMinibatchBase + static_cast<std::uint64_t>(i)));
    }

    // All agents draw their initializations from one shared stream, in agent
    // order, so every agent can reproduce its peers' starting policies.
    std::vector<ac::AgentLearner> learners;
    learners.reserve(static_cast<std::size_t>(D));
    for (int i = 0; i < D; ++i)
        learners.emplace_back(i, cfg.algo, layout, cfg.hp.actor_widths, cfg.hp.critic_widths,
                              init_rng);

    std::vector<ac::OuNoise> noise;
    std::vector<ac::ReplayBuffer> replays;
    for (int i = 0; i < D; ++i) {
        noise.emplace_back(layout.act_dim, cfg.hp.ou_theta, cfg.hp.ou_sigma, cfg.hp.ou_dt);
        replays.emplace_back(cfg.hp.replay_capacity);
    }

    std::vector<const nn::MlpParams*> actor_ptrs(static_cast<std::size_t>(D));
    auto refresh_actor_ptrs = [&] {
        for (int i = 0; i < D; ++i) actor_ptrs[static_cast<std::size_t>(i)] = &learners[static_cast<std::size_t>(i)].actor;
    };
    refresh_actor_ptrs();

    std::optional<net::NetworkSim> netsim;
    std::vector<net::PolicyCache> central_caches(static_cast<std::size_t>(D));
    if (networked) {
        netsim.emplace(env_cfg, *cfg.net, learners.front().actor.shape(),
                       splitmix64(seed) ^ splitmix64(kStreamNet));
        netsim->seed_initial_policies(actor_ptrs);
    } else {
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) {
                if (i == j) continue;
                central_caches[static_cast<std::size_t>(i)].update_if_newer(
                    j, learners[static_cast<std::size_t>(j)].actor, 0);
            }
    }
    auto cache_of = [&](int i) -> net::PolicyCache& {
        return networked ? netsim->cache(i) : central_caches[static_cast<std::size_t>(i)];
    };

    fs::create_directories(seed_dir);
    CsvWriter metrics_csv((seed_dir / "metrics.csv").string(), kMetricsSchema, metrics_columns(D));
    CsvWriter timing_csv((seed_dir / "timing.csv").string(), kTimingSchema, {"epoch", "wall_ms"});
    std::optional<CsvWriter> aoi_csv;
    if (networked) aoi_csv.emplace((seed_dir / "aoi.csv").string(), kAoiSchema, aoi_columns(D));

    std::int64_t n = 0; // global slot counter across epochs

    try {
        for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            auto wall_start = std::chrono::steady_clock::now();

            game::GlobalState state = game::env_reset(env_cfg, env_rng);
            std::vector<std::vector<double>> obs(static_cast<std::size_t>(D));
            for (int i = 0; i < D; ++i) obs[static_cast<std::size_t>(i)] = game::observe(env_cfg, state, i);

            std::vector<double> reward_sum(static_cast<std::size_t>(D), 0.0);
            EpochAoi aoi;

            for (int step = 0; step < horizon; ++step) {
                game::JointAction actions(static_cast<std::size_t>(D));
                for (int i = 0; i < D; ++i)
                    actions[static_cast<std::size_t>(i)] =
                        ac::act(learners[static_cast<std::size_t>(i)], obs[static_cast<std::size_t>(i)],
                                noise[static_cast<std::size_t>(i)], ou_rngs[static_cast<std::size_t>(i)]);

                game::StepResult sr = game::env_step(env_cfg, state, actions);
                std::vector<std::vector<double>> next_obs(static_cast<std::size_t>(D));
                for (int i = 0; i < D; ++i)
                    next_obs[static_cast<std::size_t>(i)] = game::observe(env_cfg, sr.next, i);
                for (int i = 0; i < D; ++i)
                    reward_sum[static_cast<std::size_t>(i)] += sr.rewards[static_cast<std::size_t>(i)];

                game::GlobalTransition staged;
                if (!networked) {
                    staged.origin_step = n;
                    for (int i = 0; i < D; ++i)
                        staged.state_enc.insert(staged.state_enc.end(),
                                                obs[static_cast<std::size_t>(i)].begin(),
                                                obs[static_cast<std::size_t>(i)].end());
                    for (int i = 0; i < D; ++i)
                        staged.action.insert(staged.action.end(),
                                             actions[static_cast<std::size_t>(i)].begin(),
                                             actions[static_cast<std::size_t>(i)].end());
                    for (int i = 0; i < D; ++i)
                        staged.next_enc.insert(staged.next_enc.end(),
                                               next_obs[static_cast<std::size_t>(i)].begin(),
                                               next_obs[static_cast<std::size_t>(i)].end());
                    staged.rewards = sr.rewards;
                    staged.raw_state = state;
                    staged.raw_next = sr.next;

                    // Pre-update snapshot of every peer policy, so all agents
                    // train against the same slot-n parametrizations.
                    for (int i = 0; i < D; ++i)
                        for (int j = 0; j < D; ++j) {
                            if (i == j) continue;
                            central_caches[static_cast<std::size_t>(i)].update_if_newer(
                                j, learners[static_cast<std::size_t>(j)].actor, n);
                        }
                } else {
                    for (int i = 0; i < D; ++i)
                        netsim->offer_local_tuple(i, n, obs[static_cast<std::size_t>(i)],
                                                  actions[static_cast<std::size_t>(i)],
                                                  next_obs[static_cast<std::size_t>(i)]);
                    netsim->comm_phase(n, actor_ptrs);
                }

                for (int i = 0; i < D; ++i)
                    ac::train_step(learners[static_cast<std::size_t>(i)],
                                   replays[static_cast<std::size_t>(i)], cache_of(i), n,
                                   cfg.hp.minibatch, cfg.hp.gamma, cfg.hp.tau_soft,
                                   cfg.hp.schedule, mb_rngs[static_cast<std::size_t>(i)]);

                // Transitions observed this slot become sampleable next slot.
                if (!networked) {
                    for (int i = 0; i < D; ++i) replays[static_cast<std::size_t>(i)].push(staged);
                } else {
                    for (int i = 0; i < D; ++i)
                        for (auto& t : netsim->take_staged(i))
                            replays[static_cast<std::size_t>(i)].push(std::move(t));
                }

                if (networked) {
                    auto taus = netsim->tau_row(n);
                    std::vector<std::string> row;
                    row.reserve(1 + taus.size() + static_cast<std::size_t>(D));
                    row.push_back(csv_int(n));
                    for (auto t : taus) {
                        row.push_back(csv_int(t));
                        aoi.tau_max = std::max(aoi.tau_max, t);
                        aoi.tau_sum += static_cast<double>(t);
                        ++aoi.tau_count;
                    }
                    for (int i = 0; i < D; ++i) {
                        std::int64_t d = replays[static_cast<std::size_t>(i)].age_of_oldest(n);
                        row.push_back(csv_int(d));
                        aoi.delta_max = std::max(aoi.delta_max, d);
                    }
                    aoi_csv->row(row);
                } else {
                    for (int i = 0; i < D; ++i)
                        aoi.delta_max = std::max(
                            aoi.delta_max, replays[static_cast<std::size_t>(i)].age_of_oldest(n));
                }

                state = std::move(sr.next);
                obs = std::move(next_obs);
                ++n;
            }

            // Per-epoch bookkeeping audits.
            for (int i = 0; i < D; ++i) {
                const auto& rb = replays[static_cast<std::size_t>(i)];
                if (rb.empty()) continue;
                std::int64_t oldest = rb.at(0).origin_step;
                for (std::size_t k = 1; k < rb.size(); ++k)
                    oldest = std::min(oldest, rb.at(k).origin_step);
                std::int64_t delta = (n - 1) - oldest;
                if (delta != rb.age_of_oldest(n - 1))
                    throw error("replay age bookkeeping diverged from scan");
                if (!networked && delta > static_cast<std::int64_t>(rb.capacity()))
                    throw error("centralized replay age exceeded capacity");
            }

            MetricsRow row;
            row.epoch = epoch;
            row.agent_mean_reward.resize(static_cast<std::size_t>(D));
            double total = 0.0;
            for (int i = 0; i < D; ++i) {
                double m = reward_sum[static_cast<std::size_t>(i)] / static_cast<double>(horizon);
                row.agent_mean_reward[static_cast<std::size_t>(i)] = m;
                total += m;
            }
            row.mean_reward = total / static_cast<double>(D);
            row.aoi_tau_max = aoi.tau_max;
            row.aoi_tau_mean =
                aoi.tau_count ? aoi.tau_sum / static_cast<double>(aoi.tau_count) : 0.0;
            row.delta_max = aoi.delta_max;

            if (networked && cfg.diag.grad_error && !replays.front().empty()) {
                // Centralized shadow view: compare gradients under the fresh
                // policies against the delivered (aged) cache.
                double ec = 0.0, ea = 0.0;
                for (int i = 0; i < D; ++i) {
                    net::PolicyCache fresh;
                    for (int j = 0; j < D; ++j) {
                        if (i == j) continue;
                        fresh.update_if_newer(j, learners[static_cast<std::size_t>(j)].actor, n);
                    }
                    const auto& rb = replays[static_cast<std::size_t>(i)];
                    auto norms = net::staleness_gradient_error(
                        learners[static_cast<std::size_t>(i)], fresh, cache_of(i),
                        rb.at(rb.size() - 1), cfg.hp.gamma);
                    ec += norms.critic;
                    ea += norms.actor;
                }
                row.grad_err_critic = ec / static_cast<double>(D);
                row.grad_err_actor = ea / static_cast<double>(D);
            }

            double norm_max = 0.0;
            for (const auto& l : learners)
                norm_max = std::max({norm_max, l.actor.l2_norm(), l.critic.l2_norm()});
            row.param_norm_max = norm_max;
            if (norm_max > cfg.hp.param_norm_ceiling)
                throw stability_error("parameter norm " + csv_double(norm_max) +
                                      " exceeded ceiling " +
                                      csv_double(cfg.hp.param_norm_ceiling));

            std::vector<std::string> fields;
            fields.push_back(csv_int(row.epoch));
            fields.push_back(csv_double(row.mean_reward));
            for (double m : row.agent_mean_reward) fields.push_back(csv_double(m));
            fields.push_back(csv_int(row.aoi_tau_max));
            fields.push_back(csv_double(row.aoi_tau_mean));
            fields.push_back(csv_int(row.delta_max));
            fields.push_back(csv_double(row.grad_err_critic));
            fields.push_back(csv_double(row.grad_err_actor));
            fields.push_back(csv_double(row.param_norm_max));
            metrics_csv.row(fields);
            metrics_csv.flush();

            auto wall_end = std::chrono::steady_clock::now();
            auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(wall_end - wall_start);
            timing_csv.row({csv_int(epoch), csv_int(ms.count())});
            timing_csv.flush();

            result.metrics.push_back(std::move(row));
            refresh_actor_ptrs();
        }
    } catch (const stability_error& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        std::ofstream aborted(seed_dir / "ABORTED.txt", std::ios::binary);
        aborted << "stability violation: " << e.what() << "\n"
                << "completed_epochs = " << result.metrics.size() << "\n";
    }

    for (int i = 0; i < D; ++i)
        write_params_file(seed_dir / ("params_agent" + std::to_string(i + 1) + ".txt"),
                          learners[static_cast<std::size_t>(i)].actor,
                          learners[static_cast<std::size_t>(i)].critic);

    return result;
}

} // namespace

RunResult run(const RunConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    {
        std::ofstream snap(out_dir / "config.txt", std::ios::binary);
        if (!snap) throw error("cannot write config snapshot");
        snap << cfg.to_config().canonical_text();
    }

    RunResult result;
    result.dir = out_dir;
    for (std::uint64_t seed : cfg.seeds) {
        fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
        result.seeds.push_back(run_one_seed(cfg, seed, seed_dir));
    }
    return result;
}

namespace {

struct LoadedRun {
    RunConfig cfg;
    KeyValueConfig raw;
    std::vector<std::vector<double>> reward_per_seed; // [seed][epoch]
};

LoadedRun load_run(const fs::path& dir) {
    LoadedRun lr;
    lr.raw = KeyValueConfig::parse_file((dir / "config.txt").string());
    lr.cfg = RunConfig::from_config(lr.raw);
    for (std::uint64_t seed : lr.cfg.seeds) {
        fs::path m = dir / ("seed_" + std::to_string(seed)) / "metrics.csv";
        CsvTable t = read_csv(m.string(), kMetricsSchema);
        std::size_t col = t.column("mean_reward");
        std::vector<double> rewards;
        rewards.reserve(t.rows.size());
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            rewards.push_back(t.cell_double(r, col));
        if (static_cast<std::int64_t>(rewards.size()) != lr.cfg.epochs)
            throw error("run " + dir.string() + " seed " + std::to_string(seed) +
                        " is incomplete: " + std::to_string(rewards.size()) + " of " +
                        std::to_string(lr.cfg.epochs) + " epochs");
        lr.reward_per_seed.push_back(std::move(rewards));
    }
    return lr;
}

std::string env_diff(const KeyValueConfig& a, const KeyValueConfig& b) {
    std::string diff;
    auto check = [&](const std::string& key) {
        std::string va = a.get_string(key, "<absent>");
        std::string vb = b.get_string(key, "<absent>");
        if (va != vb) diff += "  " + key + ": " + va + " vs " + vb + "\n";
    };
    for (const char* key : {"env.variant", "env.num_agents", "env.num_landmarks", "env.horizon",
                            "env.orientation_mode", "epochs"})
        check(key);
    return diff;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace

CompareReport compare(const fs::path& dir_a, const fs::path& dir_b, double final_fraction) {
    LoadedRun a = load_run(dir_a);
    LoadedRun b = load_run(dir_b);

    std::string diff = env_diff(a.raw, b.raw);
    if (!diff.empty())
        throw config_error("runs are not comparable; differing keys:\n" + diff);

    CompareReport rep;
    rep.epochs = a.cfg.epochs;
    rep.num_seeds = std::min(a.reward_per_seed.size(), b.reward_per_seed.size());
    rep.final_window = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(static_cast<double>(rep.epochs) * final_fraction));

    for (std::int64_t e = 0; e < rep.epochs; ++e) {
        std::vector<double> va, vb;
        for (std::size_t s = 0; s < rep.num_seeds; ++s) {
            va.push_back(a.reward_per_seed[s][static_cast<std::size_t>(e)]);
            vb.push_back(b.reward_per_seed[s][static_cast<std::size_t>(e)]);
        }
        double ma = mean_of(va), mb = mean_of(vb);
        rep.per_epoch_mean_a.push_back(ma);
        rep.per_epoch_sd_a.push_back(sd_of(va, ma));
        rep.per_epoch_mean_b.push_back(mb);
        rep.per_epoch_sd_b.push_back(sd_of(vb, mb));
    }

    std::size_t wins = 0;
    for (std::size_t s = 0; s < rep.num_seeds; ++s) {
        auto final_mean = [&](const std::vector<double>& series) {
            std::span<const double> tail(series.data() + series.size() -
                                             static_cast<std::size_t>(rep.final_window),
                                         static_cast<std::size_t>(rep.final_window));
            return mean_of(tail);
        };
        double fa = final_mean(a.reward_per_seed[s]);
        double fb = final_mean(b.reward_per_seed[s]);
        rep.final_mean_a.push_back(fa);
        rep.final_mean_b.push_back(fb);
        if (fa >= fb) ++wins;
    }
    rep.final_window_mean_a = mean_of(rep.final_mean_a);
    rep.final_window_mean_b = mean_of(rep.final_mean_b);
    rep.win_fraction =
        rep.num_seeds ? static_cast<double>(wins) / static_cast<double>(rep.num_seeds) : 0.0;
    return rep;
}

std::string CompareReport::text() const {
    std::ostringstream out;
    out << "epochs: " << epochs << ", seeds compared: " << num_seeds
        << ", final window: last " << final_window << " epochs\n";
    out << "final-window mean reward: A = " << csv_double(final_window_mean_a)
        << ", B = " << csv_double(final_window_mean_b)
        << ", gap (A-B) = " << csv_double(final_window_mean_a - final_window_mean_b) << "\n";
    out << "per-seed final means:\n";
    for (std::size_t s = 0; s < final_mean_a.size(); ++s)
        out << "  seed#" << s + 1 << ": A = " << csv_double(final_mean_a[s])
            << ", B = " << csv_double(final_mean_b[s])
            << (final_mean_a[s] >= final_mean_b[s] ? "  (A)" : "  (B)") << "\n";
    out << "A wins in " << csv_double(win_fraction * 100.0) << "% of seeds\n";
    return out.str();
}

AoiCheckReport check_aoi(const fs::path& run_dir, int q) {
    KeyValueConfig raw = KeyValueConfig::parse_file((run_dir / "config.txt").string());
    RunConfig cfg = RunConfig::from_config(raw);
    if (!cfg.net) throw config_error("run has no network block; nothing to check");
    if (q < 1) throw config_error("q must be >= 1");

    // Message sizes as the run used them.
    nn::Shape actor_shape = nn::make_shape(game::obs_dim(cfg.env), cfg.hp.actor_widths,
                                           game::action_dims(cfg.env), nn::Activation::Gelu,
                                           nn::Activation::Tanh);
    net::NetworkSim probe(cfg.env, *cfg.net, actor_shape, 0);
    std::int64_t fp = probe.policy_fragments();
    std::int64_t ft = probe.tuple_fragments();
    // Successes needed from one policy snapshot to the delivery of the next:
    // the snapshot's own fragments, a full tuple block, and the following
    // policy's fragments. The trials count for that many successes
    // stochastically dominates every tau sample.
    int bound_successes = static_cast<int>(2 * fp + cfg.net->tuples_per_cycle * ft);

    std::vector<std::int64_t> pooled;
    for (std::uint64_t seed : cfg.seeds) {
        fs::path a = run_dir / ("seed_" + std::to_string(seed)) / "aoi.csv";
        CsvTable t = read_csv(a.string(), kAoiSchema);
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (t.columns[c].rfind("tau_", 0) != 0) continue;
            for (std::size_t r = 0; r < t.rows.size(); ++r)
                pooled.push_back(t.cell_int(r, c));
        }
    }

    AoiCheckReport rep;
    rep.lambda = cfg.net->lambda;
    rep.q = q;
    rep.fragments_bound = bound_successes;
    double lambda = cfg.net->lambda;
    rep.dominance = net::dominance_check(
        pooled,
        [bound_successes, lambda](std::int64_t m) {
            return net::negbinom_trials_tail(m, bound_successes, lambda);
        });
    double moment = 0.0;
    for (std::int64_t s : pooled) moment += std::pow(static_cast<double>(s), q);
    rep.empirical_moment = pooled.empty() ? 0.0 : moment / static_cast<double>(pooled.size());
    return rep;
}

std::string AoiCheckReport::text() const {
    std::ostringstream out;
    out << "samples: " << dominance.num_samples << ", lambda: " << csv_double(lambda)
        << ", candidate: trials to " << fragments_bound << " successes\n";
    if (!dominance.enough_data) {
        out << "insufficient data (need >= 1000 samples)\n";
        return out.str();
    }
    out << (dominance.dominated ? "DOMINATED" : "NOT DOMINATED")
        << ", worst margin: " << csv_double(dominance.worst_margin) << "\n";
    out << "empirical E[tau^" << q << "]: " << csv_double(empirical_moment) << "\n";
    return out.str();
}

namespace {

// Finite-difference probe used by the gradcheck subcommand. Central
// differences of the scalar objectives behind each sample-gradient path.
double fd_rel_err(std::span<const double> analytic, std::span<const double> numeric) {
    double worst = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        double scale = std::max({1.0, std::fabs(analytic[k]), std::fabs(numeric[k])});
        worst = std::max(worst, std::fabs(analytic[k] - numeric[k]) / scale);
    }
    return worst;
}

std::vector<double> critic_in_of(const ac::GameLayout& lay, std::span<const double> enc,
                                 std::span<const double> joint_raw) {
    std::vector<double> in(enc.begin(), enc.end());
    for (std::size_t k = 0; k < joint_raw.size(); ++k)
        in.push_back(lay.action_feature(k, joint_raw[k]));
    return in;
}

} // namespace

GradCheckReport gradcheck(int num_nets, std::uint64_t seed) {
    GradCheckReport rep;
    const double h = 1e-5;
    const double tol = 1e-4;
    Rng rng(seed);

    for (int c = 0; c < num_nets; ++c) {
        game::EnvConfig env_cfg;
        env_cfg.variant = (c % 2 == 0) ? game::Variant::Coord : game::Variant::Spread;
        env_cfg.num_agents = 2;
        env_cfg.num_landmarks = 1 + static_cast<int>(rng.uniform_index(2));

        ac::GameLayout layout{env_cfg.num_agents, game::obs_dim(env_cfg),
                              game::action_dims(env_cfg), game::action_bounds(env_cfg)};
        std::vector<int> actor_w{2 + static_cast<int>(rng.uniform_index(2))};
        std::vector<int> critic_w{3 + static_cast<int>(rng.uniform_index(3))};
        ac::AgentLearner learner(0, ac::Algo::ThreeDpg, layout, actor_w, critic_w, rng);

        net::PolicyCache cache;
        for (int j = 1; j < layout.num_agents; ++j) {
            ac::AgentLearner peer(j, ac::Algo::ThreeDpg, layout, actor_w, critic_w, rng);
            cache.update_if_newer(j, peer.actor, 0);
        }

        game::GlobalTransition t;
        t.origin_step = 0;
        for (int k = 0; k < layout.enc_dim(); ++k) t.state_enc.push_back(rng.uniform(-1.0, 1.0));
        for (int k = 0; k < layout.enc_dim(); ++k) t.next_enc.push_back(rng.uniform(-1.0, 1.0));
        for (int a = 0; a < layout.num_agents; ++a)
            for (int d = 0; d < layout.act_dim; ++d)
                t.action.push_back(rng.uniform(layout.bounds.lo[static_cast<std::size_t>(d)],
                                               layout.bounds.hi[static_cast<std::size_t>(d)]));
        t.rewards.assign(static_cast<std::size_t>(layout.num_agents), rng.uniform(0.0, 1.0));
        const double gamma = 0.9;

        // Critic path: 0.5 * delta(theta)^2 with the bootstrap target frozen.
        {
            auto analytic = ac::critic_sample_gradient(learner, cache, t, gamma);
            nn::EvalTape tape;
            std::vector<double> joint(t.action.size());
            {
                std::vector<double> a;
                for (int j = 0; j < layout.num_agents; ++j) {
                    const nn::MlpParams& p = (j == 0) ? learner.actor_target : cache.get(j).params;
                    nn::actor_forward(p, layout.obs_of(t.next_enc, j), layout.bounds, tape, a);
                    std::copy(a.begin(), a.end(), joint.begin() + static_cast<std::size_t>(j) * layout.act_dim);
                }
            }
            std::vector<double> target_in = critic_in_of(layout, t.next_enc, joint);
            nn::forward(learner.critic_target, target_in, tape);
            double target = t.rewards[0] + gamma * tape.output[0];

            std::vector<double> critic_in = critic_in_of(layout, t.state_enc, t.action);
            nn::MlpParams theta = learner.critic;
            auto loss = [&](const std::vector<double>& values) {
                theta.set_values(values);
                nn::forward(theta, critic_in, tape);
                double delta = target - tape.output[0];
                return 0.5 * delta * delta;
            };
            std::vector<double> values = learner.critic.values();
            std::vector<double> numeric(values.size());
            for (std::size_t k = 0; k < values.size(); ++k) {
                double keep = values[k];
                values[k] = keep + h;
                double up = loss(values);
                values[k] = keep - h;
                double down = loss(values);
                values[k] = keep;
                numeric[k] = -(up - down) / (2.0 * h); // ascent direction
            }
            double err = fd_rel_err(analytic, numeric);
            rep.max_rel_err = std::max(rep.max_rel_err, err);
            ++rep.cases;
            if (err > tol) ++rep.failures;
        }

        // Both actor paths: phi -> Q(s, joint action with own slot from phi).
        for (int variant = 0; variant < 2; ++variant) {
            bool stored_actions = variant == 1;
            auto analytic = stored_actions ? ac::actor_sample_gradient_maddpg(learner, t)
                                           : ac::actor_sample_gradient_3dpg(learner, cache, t);
            nn::EvalTape tape;
            nn::MlpParams phi = learner.actor;
            auto objective = [&](const std::vector<double>& values) {
                phi.set_values(values);
                std::vector<double> joint;
                if (stored_actions) {
                    joint = t.action;
                } else {
                    joint.resize(t.action.size());
                    std::vector<double> a;
                    for (int j = 1; j < layout.num_agents; ++j) {
                        nn::actor_forward(cache.get(j).params, layout.obs_of(t.state_enc, j),
                                          layout.bounds, tape, a);
                        std::copy(a.begin(), a.end(),
                                  joint.begin() + static_cast<std::size_t>(j) * layout.act_dim);
                    }
                }
                std::vector<double> own;
                nn::actor_forward(phi, layout.obs_of(t.state_enc, 0), layout.bounds, tape, own);
                std::copy(own.begin(), own.end(), joint.begin());
                std::vector<double> critic_in = critic_in_of(layout, t.state_enc, joint);
                nn::forward(learner.critic, critic_in, tape);
                return tape.output[0];
            };
            std::vector<double> values = learner.actor.values();
            std::vector<double> numeric(values.size());
            for (std::size_t k = 0; k < values.size(); ++k) {
                double keep = values[k];
                values[k] = keep + h;
                double up = objective(values);
                values[k] = keep - h;
                double down = objective(values);
                values[k] = keep;
                numeric[k] = (up - down) / (2.0 * h);
            }
            double err = fd_rel_err(analytic, numeric);
            rep.max_rel_err = std::max(rep.max_rel_err, err);
            ++rep.cases;
            if (err > tol) ++rep.failures;
        }
    }
    return rep;
}

std::string GradCheckReport::text() const {
    std::ostringstream out;
    out << "gradient checks: " << cases << " cases, " << failures
        << " failures, max relative error " << csv_double(max_rel_err) << "\n"
        << (pass() ? "PASS" : "FAIL") << "\n";
    return out.str();
}

} // namespace dpg::harness
