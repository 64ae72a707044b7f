#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dpg/csv.hpp"
#include "dpg/errors.hpp"
#include "dpg/harness.hpp"

namespace dpg::harness {

namespace fs = std::filesystem;

namespace {

constexpr int kWidth = 760;
constexpr int kHeight = 460;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 20;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Axes {
    double x_min, x_max, y_min, y_max;

    double px(double x) const {
        double t = (x - x_min) / (x_max - x_min);
        return kMarginLeft + t * (kWidth - kMarginLeft - kMarginRight);
    }
    double py(double y) const {
        double t = (y - y_min) / (y_max - y_min);
        return kHeight - kMarginBottom - t * (kHeight - kMarginTop - kMarginBottom);
    }
};

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::vector<double> band_lo, band_hi; // optional, same length as x
};

void render_svg(const fs::path& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<Series>& series) {
    double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
    double y_min = x_min, y_max = -x_min;
    for (const auto& s : series) {
        for (double v : s.x) {
            x_min = std::min(x_min, v);
            x_max = std::max(x_max, v);
        }
        for (double v : s.y) {
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
        }
        for (double v : s.band_lo) y_min = std::min(y_min, v);
        for (double v : s.band_hi) y_max = std::max(y_max, v);
    }
    if (!(x_min < x_max)) x_max = x_min + 1.0;
    if (!(y_min < y_max)) y_max = y_min + 1.0;
    double pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    Axes ax{x_min, x_max, y_min, y_max};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"14\" text-anchor=\"middle\" font-size=\"13\">"
        << title << "</text>\n";

    // Axis frame and ticks.
    svg << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\""
        << kWidth - kMarginLeft - kMarginRight << "\" height=\""
        << kHeight - kMarginTop - kMarginBottom << "\" fill=\"none\" stroke=\"#555\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        double xv = x_min + (x_max - x_min) * t / 5.0;
        double yv = y_min + (y_max - y_min) * t / 5.0;
        svg << "<line x1=\"" << num(ax.px(xv)) << "\" y1=\"" << kHeight - kMarginBottom
            << "\" x2=\"" << num(ax.px(xv)) << "\" y2=\"" << kHeight - kMarginBottom + 4
            << "\" stroke=\"#555\"/>\n";
        svg << "<text x=\"" << num(ax.px(xv)) << "\" y=\"" << kHeight - kMarginBottom + 16
            << "\" text-anchor=\"middle\" font-size=\"10\">" << num(xv) << "</text>\n";
        svg << "<line x1=\"" << kMarginLeft - 4 << "\" y1=\"" << num(ax.py(yv)) << "\" x2=\""
            << kMarginLeft << "\" y2=\"" << num(ax.py(yv)) << "\" stroke=\"#555\"/>\n";
        svg << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << num(ax.py(yv) + 3)
            << "\" text-anchor=\"end\" font-size=\"10\">" << num(yv) << "</text>\n";
    }
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8
        << "\" text-anchor=\"middle\" font-size=\"11\">" << x_label << "</text>\n";
    svg << "<text x=\"14\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 14 "
        << kHeight / 2 << ")\">" << y_label << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& sr = series[s];
        const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
        if (!sr.band_lo.empty()) {
            svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
            for (std::size_t k = 0; k < sr.x.size(); ++k)
                svg << num(ax.px(sr.x[k])) << "," << num(ax.py(sr.band_hi[k])) << " ";
            for (std::size_t k = sr.x.size(); k-- > 0;)
                svg << num(ax.px(sr.x[k])) << "," << num(ax.py(sr.band_lo[k])) << " ";
            svg << "\"/>\n";
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.4\" points=\"";
        for (std::size_t k = 0; k < sr.x.size(); ++k)
            svg << num(ax.px(sr.x[k])) << "," << num(ax.py(sr.y[k])) << " ";
        svg << "\"/>\n";
        double ly = kMarginTop + 14.0 + 14.0 * static_cast<double>(s);
        svg << "<line x1=\"" << kMarginLeft + 8 << "\" y1=\"" << num(ly - 4) << "\" x2=\""
            << kMarginLeft + 28 << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << kMarginLeft + 33 << "\" y=\"" << num(ly)
            << "\" font-size=\"10\">" << sr.label << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write " + path.string());
    out << svg.str();
}

// Deterministic decimation to keep trace files bounded.
std::size_t stride_for(std::size_t n, std::size_t cap = 2000) {
    return n <= cap ? 1 : (n + cap - 1) / cap;
}

} // namespace

std::vector<fs::path> plot(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
    if (run_dirs.empty()) throw config_error("plot needs at least one run directory");
    fs::create_directories(out_dir);
    std::vector<fs::path> produced;

    // Reward curves with across-seed bands, all runs overlaid.
    std::vector<Series> reward_series;
    for (const auto& dir : run_dirs) {
        KeyValueConfig raw = KeyValueConfig::parse_file((dir / "config.txt").string());
        RunConfig cfg = RunConfig::from_config(raw);

        std::vector<std::vector<double>> per_seed;
        for (std::uint64_t seed : cfg.seeds) {
            CsvTable t = read_csv((dir / ("seed_" + std::to_string(seed)) / "metrics.csv").string(),
                                  kMetricsSchema);
            std::size_t col = t.column("mean_reward");
            std::size_t epoch_col = t.column("epoch");
            (void)epoch_col;
            std::vector<double> r;
            for (std::size_t row = 0; row < t.rows.size(); ++row)
                r.push_back(t.cell_double(row, col));
            per_seed.push_back(std::move(r));
        }
        std::size_t epochs = per_seed.empty() ? 0 : per_seed.front().size();
        for (const auto& r : per_seed) epochs = std::min(epochs, r.size());

        Series s;
        s.label = dir.filename().string();
        for (std::size_t e = 0; e < epochs; ++e) {
            double m = 0.0;
            for (const auto& r : per_seed) m += r[e];
            m /= static_cast<double>(per_seed.size());
            double var = 0.0;
            for (const auto& r : per_seed) var += (r[e] - m) * (r[e] - m);
            double sd = per_seed.size() > 1
                            ? std::sqrt(var / static_cast<double>(per_seed.size() - 1))
                            : 0.0;
            s.x.push_back(static_cast<double>(e));
            s.y.push_back(m);
            s.band_lo.push_back(m - sd);
            s.band_hi.push_back(m + sd);
        }
        reward_series.push_back(std::move(s));
    }
    fs::path reward_path = out_dir / "reward.svg";
    render_svg(reward_path, "mean reward per epoch", "epoch", "reward", reward_series);
    produced.push_back(reward_path);

    // One AoI trace per networked run, from its first seed.
    for (const auto& dir : run_dirs) {
        KeyValueConfig raw = KeyValueConfig::parse_file((dir / "config.txt").string());
        RunConfig cfg = RunConfig::from_config(raw);
        if (cfg.mode != Mode::Networked) continue;
        fs::path aoi_file = dir / ("seed_" + std::to_string(cfg.seeds.front())) / "aoi.csv";
        CsvTable t = read_csv(aoi_file.string(), kAoiSchema);
        std::size_t slot_col = t.column("slot");

        std::vector<Series> aoi_series;
        std::size_t stride = stride_for(t.rows.size());
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (t.columns[c].rfind("tau_", 0) != 0) continue;
            Series s;
            s.label = t.columns[c];
            for (std::size_t r = 0; r < t.rows.size(); r += stride) {
                s.x.push_back(t.cell_double(r, slot_col));
                s.y.push_back(t.cell_double(r, c));
            }
            aoi_series.push_back(std::move(s));
        }
        fs::path aoi_path = out_dir / ("aoi_" + dir.filename().string() + ".svg");
        render_svg(aoi_path, "policy age of information", "slot", "age (slots)", aoi_series);
        produced.push_back(aoi_path);
    }
    return produced;
}

} // namespace dpg::harness
