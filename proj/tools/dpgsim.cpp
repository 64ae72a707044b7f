#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpg/config.hpp"
#include "dpg/errors.hpp"
#include "dpg/harness.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"multi-agent actor-critic simulator over a lossy network"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    auto* run_cmd = app.add_subcommand("run", "execute a run config over all its seeds");
    run_cmd->add_option("config", config_path, "run config file")->required();
    run_cmd->add_option("--out", out_dir, "output directory (default: runs/<config stem>)");

    std::string dir_a, dir_b;
    double final_fraction = 0.10;
    auto* compare_cmd = app.add_subcommand("compare", "aligned statistics for two runs");
    compare_cmd->add_option("dirA", dir_a)->required();
    compare_cmd->add_option("dirB", dir_b)->required();
    compare_cmd->add_option("--final-fraction", final_fraction,
                            "trailing window as a fraction of epochs");

    std::vector<std::string> plot_dirs;
    std::string plot_out = "plots";
    auto* plot_cmd = app.add_subcommand("plot", "render reward and AoI curves from run CSVs");
    plot_cmd->add_option("dirs", plot_dirs, "run directories")->required();
    plot_cmd->add_option("--out", plot_out, "output directory for SVG files");

    std::string aoi_dir;
    int q = 1;
    auto* aoi_cmd = app.add_subcommand("check-aoi", "stochastic-dominance check of a run's AoI");
    aoi_cmd->add_option("dir", aoi_dir, "run directory")->required();
    aoi_cmd->add_option("--q", q, "moment order to report");

    int gc_nets = 100;
    std::uint64_t gc_seed = 2024;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference sweep of the gradient paths");
    gc_cmd->add_option("--nets", gc_nets, "number of random nets");
    gc_cmd->add_option("--seed", gc_seed, "sweep seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            auto kv = dpg::KeyValueConfig::parse_file(config_path);
            auto cfg = dpg::harness::RunConfig::from_config(kv);
            fs::path out = out_dir.empty()
                               ? fs::path("runs") / fs::path(config_path).stem()
                               : fs::path(out_dir);
            auto result = dpg::harness::run(cfg, out);
            std::cout << "run complete: " << result.dir.string() << "\n";
            for (const auto& s : result.seeds) {
                std::cout << "  seed " << s.seed << ": " << s.metrics.size() << " epochs";
                if (s.aborted) std::cout << " [ABORTED: " << s.abort_reason << "]";
                if (!s.metrics.empty())
                    std::cout << ", final mean reward " << s.metrics.back().mean_reward;
                std::cout << "\n";
            }
            return result.any_aborted() ? 2 : 0;
        }
        if (*compare_cmd) {
            auto report = dpg::harness::compare(dir_a, dir_b, final_fraction);
            std::cout << report.text();
            return 0;
        }
        if (*plot_cmd) {
            std::vector<fs::path> dirs(plot_dirs.begin(), plot_dirs.end());
            auto files = dpg::harness::plot(dirs, plot_out);
            for (const auto& f : files) std::cout << f.string() << "\n";
            return 0;
        }
        if (*aoi_cmd) {
            auto report = dpg::harness::check_aoi(aoi_dir, q);
            std::cout << report.text();
            return report.dominance.enough_data && report.dominance.dominated ? 0 : 2;
        }
        if (*gc_cmd) {
            auto report = dpg::harness::gradcheck(gc_nets, gc_seed);
            std::cout << report.text();
            return report.pass() ? 0 : 2;
        }
    } catch (const dpg::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
