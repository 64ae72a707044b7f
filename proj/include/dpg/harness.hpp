#ifndef DPG_HARNESS_HPP
#define DPG_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpg/config.hpp"
#include "dpg/game.hpp"
#include "dpg/learner.hpp"
#include "dpg/netsim.hpp"

namespace dpg::harness {

enum class Mode { Centralized, Networked };

struct HyperParams {
    double gamma = 0.9;
    int minibatch = 128;
    std::size_t replay_capacity = 20000;
    double tau_soft = 0.01;
    ac::StepSizeSchedule schedule;
    double ou_theta = 0.15;
    double ou_sigma = 0.2;
    double ou_dt = 1.0;
    std::vector<int> actor_widths{64, 8};
    std::vector<int> critic_widths{128, 32};
    double param_norm_ceiling = 1e6;
};

struct DiagOptions {
    bool grad_error = true; // staleness gradient-error norms, networked runs only
};

struct RunConfig {
    game::EnvConfig env;
    HyperParams hp;
    Mode mode = Mode::Centralized;
    ac::Algo algo = ac::Algo::ThreeDpg;
    std::optional<net::NetConfig> net;
    std::int64_t epochs = 300;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    DiagOptions diag;

    // Throws config_error on contradictions (networked without a network
    // block, MADDPG in networked mode, empty seed list, ...).
    void validate() const;

    static RunConfig from_config(const KeyValueConfig& kv);
    KeyValueConfig to_config() const;
};

struct MetricsRow {
    std::int64_t epoch = 0;
    double mean_reward = 0.0;               // mean over agents of the per-epoch step mean
    std::vector<double> agent_mean_reward;  // one per agent
    std::int64_t aoi_tau_max = 0;
    double aoi_tau_mean = 0.0;
    std::int64_t delta_max = 0;
    double grad_err_critic = std::numeric_limits<double>::quiet_NaN();
    double grad_err_actor = std::numeric_limits<double>::quiet_NaN();
    double param_norm_max = 0.0;
};

inline constexpr const char* kMetricsSchema = "dpg.metrics.v1";
inline constexpr const char* kAoiSchema = "dpg.aoi.v1";
inline constexpr const char* kTimingSchema = "dpg.timing.v1";

struct SeedResult {
    std::uint64_t seed = 0;
    bool aborted = false;
    std::string abort_reason;
    std::vector<MetricsRow> metrics;
};

struct RunResult {
    std::filesystem::path dir;
    std::vector<SeedResult> seeds;
    bool any_aborted() const {
        for (const auto& s : seeds)
            if (s.aborted) return true;
        return false;
    }
};

// Executes every seed sequentially and persists, per seed,
//   metrics.csv   one row per epoch (deterministic bytes)
//   aoi.csv       per-slot AoI trace (networked runs)
//   timing.csv    wall-clock per epoch; intentionally outside the
//                 deterministic artifact set
//   params_agent<i>.txt  final parameters
// plus a canonical config snapshot at the run root. A stability abort
// (parameter norms over the ceiling) keeps the partial outputs and is
// recorded in ABORTED.txt.
RunResult run(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct CompareReport {
    std::int64_t epochs = 0;
    std::size_t num_seeds = 0;
    std::int64_t final_window = 0; // epochs in the trailing window
    std::vector<double> final_mean_a, final_mean_b; // per seed
    double final_window_mean_a = 0.0, final_window_mean_b = 0.0;
    double win_fraction = 0.0; // fraction of seeds where A >= B
    std::vector<double> per_epoch_mean_a, per_epoch_sd_a;
    std::vector<double> per_epoch_mean_b, per_epoch_sd_b;

    std::string text() const;
};

// Aligned statistics for two runs that share env config and epochs;
// refuses with a diff otherwise. `final_fraction` selects the trailing
// window (default: last 10% of epochs).
CompareReport compare(const std::filesystem::path& dir_a, const std::filesystem::path& dir_b,
                      double final_fraction = 0.10);

// Reward curves (mean with a min/max-free mean +- sd band across seeds) for
// each run directory, and an AoI trace when aoi.csv is present. Pure
// re-rendering of the CSVs; output bytes depend only on their contents.
std::vector<std::filesystem::path> plot(const std::vector<std::filesystem::path>& run_dirs,
                                        const std::filesystem::path& out_dir);

struct AoiCheckReport {
    net::DominanceReport dominance;
    double empirical_moment = 0.0; // E[tau^q] over the pooled samples
    int fragments_bound = 0;       // successes in the candidate completion time
    double lambda = 0.0;
    int q = 1;
    std::string text() const;
};

// Pools tau samples from every seed's aoi.csv and checks stochastic
// dominance against the negative-binomial completion-time tail implied by
// the run's own network config.
AoiCheckReport check_aoi(const std::filesystem::path& run_dir, int q = 1);

struct GradCheckReport {
    int cases = 0;
    int failures = 0;
    double max_rel_err = 0.0;
    bool pass() const { return failures == 0 && cases > 0; }
    std::string text() const;
};

// Built-in finite-difference sweep over seeded random nets for the three
// sample-gradient paths; the `gradcheck` CLI subcommand.
GradCheckReport gradcheck(int num_nets = 100, std::uint64_t seed = 2024);

} // namespace dpg::harness

#endif
