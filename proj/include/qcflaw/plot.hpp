#pragma once

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qcflaw/config.hpp"

namespace qcflaw {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool steps = false;    // histogram bars (x holds left bin edges plus the final right edge)
    bool markers = false;  // points joined by lines
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    bool log_y = false;
    bool time_axis = false;         // adds a secondary ns axis on top
    std::vector<double> marks;      // vertical tick marks (switching times)
    double y_min = NAN;             // NAN: from data
    double y_max = NAN;
};

// Self-contained SVG with panels laid out in `columns` columns. Output
// depends only on the input (fixed number formatting, no timestamps).
std::string render_svg(const std::string& title, const std::vector<Panel>& panels, int columns = 2);

// Single-file renderers. Each parses the CSV first and throws ParseError
// (naming the file and line) without writing anything when it is malformed.
void plot_gate_csv(const std::filesystem::path& csv, const std::filesystem::path& svg,
                   std::span<const double> switching_times = {});
void plot_levels_csv(const std::filesystem::path& csv, const std::filesystem::path& svg, std::size_t bins = 20,
                     double s_max = 4.0);
void plot_echo_csv(const std::filesystem::path& csv, const std::filesystem::path& svg);
void plot_memory_csv(const std::filesystem::path& csv, const std::filesystem::path& svg);
void plot_variance_csv(const std::filesystem::path& csv, const std::filesystem::path& svg);

struct PlotReport {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> errors;
};

// Renders every recognized CSV in `dir` into dir/plots, plus overlay figures
// across J_x for gate, echo, memory and Rabi outputs.
PlotReport emit_plots(const std::filesystem::path& dir, const CampaignConfig& cfg);

}  // namespace qcflaw
