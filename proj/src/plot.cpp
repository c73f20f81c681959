#include "qcflaw/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <regex>

#include <fmt/format.h>

#include "qcflaw/error.hpp"
#include "qcflaw/io.hpp"
#include "qcflaw/model.hpp"
#include "qcflaw/spectral.hpp"
#include "qcflaw/units.hpp"

namespace qcflaw {

namespace {

constexpr double kPanelWidth = 480;
constexpr double kPanelHeight = 320;
constexpr double kMarginLeft = 70;
constexpr double kMarginRight = 20;
constexpr double kMarginTop = 56;
constexpr double kMarginBottom = 50;
constexpr double kTitleHeight = 36;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
                                    "#7f7f7f"};

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string f2(double v) { return fmt::format("{:.2f}", v); }

std::string tick_label(double v, double step) {
    if (v == 0.0) return "0";
    const int digits = std::max(0, -static_cast<int>(std::floor(std::log10(step) + 1e-9)));
    return fmt::format("{:.{}f}", v, digits);
}

std::vector<double> nice_ticks(double lo, double hi, int target, double& step) {
    const double range = hi - lo;
    const double raw = range / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    step = (norm < 1.5 ? 1 : norm < 3.5 ? 2 : norm < 7.5 ? 5 : 10) * mag;
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * range; t += step)
        ticks.push_back(std::abs(t) < 1e-12 * range ? 0.0 : t);
    return ticks;
}

struct Frame {
    double x0, y0, w, h;  // plotting area in SVG coordinates
    double xlo, xhi, ylo, yhi;
    bool log_y;

    double px(double x) const { return x0 + (x - xlo) / (xhi - xlo) * w; }
    double py(double y) const {
        if (log_y) {
            const double v = std::log10(std::max(y, ylo));
            return y0 + h - (v - std::log10(ylo)) / (std::log10(yhi) - std::log10(ylo)) * h;
        }
        return y0 + h - (y - ylo) / (yhi - ylo) * h;
    }
};

void data_range(const Panel& p, double& xlo, double& xhi, double& ylo, double& yhi) {
    xlo = ylo = std::numeric_limits<double>::infinity();
    xhi = yhi = -std::numeric_limits<double>::infinity();
    for (const auto& s : p.series) {
        for (double x : s.x)
            if (std::isfinite(x)) {
                xlo = std::min(xlo, x);
                xhi = std::max(xhi, x);
            }
        for (double y : s.y)
            if (std::isfinite(y) && (!p.log_y || y > 0)) {
                ylo = std::min(ylo, y);
                yhi = std::max(yhi, y);
            }
    }
    if (!std::isfinite(xlo)) xlo = 0, xhi = 1;
    if (!std::isfinite(ylo)) ylo = p.log_y ? 1e-3 : 0, yhi = 1;
    if (p.series.size() && std::any_of(p.series.begin(), p.series.end(), [](const Series& s) { return s.steps; }))
        ylo = std::min(ylo, 0.0);
    if (!std::isnan(p.y_min)) ylo = p.y_min;
    if (!std::isnan(p.y_max)) yhi = p.y_max;
    if (xhi <= xlo) xhi = xlo + 1;
    if (p.log_y) {
        ylo = std::pow(10.0, std::floor(std::log10(ylo)));
        yhi = std::pow(10.0, std::ceil(std::log10(yhi)));
        if (yhi <= ylo) yhi = ylo * 10;
    } else if (yhi <= ylo) {
        yhi = ylo + 1;
    } else {
        const double pad = 0.05 * (yhi - ylo);
        if (std::isnan(p.y_min)) ylo -= pad;
        if (std::isnan(p.y_max)) yhi += pad;
    }
}

void render_panel(std::string& svg, const Panel& p, double ox, double oy) {
    Frame fr{};
    fr.x0 = ox + kMarginLeft;
    fr.y0 = oy + kMarginTop;
    fr.w = kPanelWidth - kMarginLeft - kMarginRight;
    fr.h = kPanelHeight - kMarginTop - kMarginBottom;
    fr.log_y = p.log_y;
    data_range(p, fr.xlo, fr.xhi, fr.ylo, fr.yhi);

    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#000\"/>\n",
                       f2(fr.x0), f2(fr.y0), f2(fr.w), f2(fr.h));
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
                       f2(fr.x0 + fr.w / 2), f2(oy + 16), esc(p.title));

    // Bottom axis.
    double step = 1;
    for (double t : nice_ticks(fr.xlo, fr.xhi, 6, step)) {
        const double x = fr.px(t);
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#000\"/>\n", f2(x),
                           f2(fr.y0 + fr.h), f2(fr.y0 + fr.h + 5));
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n", f2(x),
                           f2(fr.y0 + fr.h + 18), tick_label(t, step));
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
                       f2(fr.x0 + fr.w / 2), f2(fr.y0 + fr.h + 36), esc(p.x_label));

    // Top axis in nanoseconds.
    if (p.time_axis) {
        const double lo = units::to_ns(fr.xlo);
        const double hi = units::to_ns(fr.xhi);
        for (double t : nice_ticks(lo, hi, 6, step)) {
            const double x = fr.px(t / units::kTimeUnitNs);
            svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#000\"/>\n", f2(x),
                               f2(fr.y0), f2(fr.y0 - 5));
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n", f2(x),
                               f2(fr.y0 - 8), tick_label(t, step));
        }
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">ns</text>\n",
                           f2(fr.x0 + fr.w), f2(oy + 30));
    }

    // Left axis.
    if (p.log_y) {
        for (double e = std::log10(fr.ylo); e <= std::log10(fr.yhi) + 1e-9; e += 1) {
            const double y = fr.py(std::pow(10.0, e));
            svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#000\"/>\n", f2(fr.x0 - 5),
                               f2(y), f2(fr.x0));
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">1e{}</text>\n",
                               f2(fr.x0 - 8), f2(y + 4), static_cast<int>(std::lround(e)));
        }
    } else {
        for (double t : nice_ticks(fr.ylo, fr.yhi, 5, step)) {
            const double y = fr.py(t);
            svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#000\"/>\n", f2(fr.x0 - 5),
                               f2(y), f2(fr.x0));
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
                               f2(fr.x0 - 8), f2(y + 4), tick_label(t, step));
        }
    }
    svg += fmt::format(
        "<text transform=\"translate({},{}) rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        f2(ox + 16), f2(fr.y0 + fr.h / 2), esc(p.y_label));

    // Switching-time marks.
    for (double m : p.marks) {
        if (m < fr.xlo || m > fr.xhi) continue;
        const double x = fr.px(m);
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#999\" stroke-dasharray=\"3,3\"/>\n",
                           f2(x), f2(fr.y0), f2(fr.y0 + fr.h));
    }

    svg += fmt::format("<clipPath id=\"c{0}_{1}\"><rect x=\"{2}\" y=\"{3}\" width=\"{4}\" height=\"{5}\"/></clipPath>\n",
                       static_cast<int>(ox), static_cast<int>(oy), f2(fr.x0), f2(fr.y0), f2(fr.w), f2(fr.h));
    svg += fmt::format("<g clip-path=\"url(#c{}_{})\">\n", static_cast<int>(ox), static_cast<int>(oy));
    for (std::size_t k = 0; k < p.series.size(); ++k) {
        const Series& s = p.series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        if (s.steps) {
            for (std::size_t i = 0; i + 1 < s.x.size() && i < s.y.size(); ++i) {
                const double top = fr.py(s.y[i]);
                svg += fmt::format(
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"0.35\" stroke=\"{}\"/>\n",
                    f2(fr.px(s.x[i])), f2(top), f2(fr.px(s.x[i + 1]) - fr.px(s.x[i])), f2(fr.py(fr.ylo) - top), color,
                    color);
            }
            continue;
        }
        std::string points;
        auto flush = [&] {
            if (!points.empty())
                svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color,
                                   points);
            points.clear();
        };
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            if (!points.empty()) points += ' ';
            points += f2(fr.px(s.x[i])) + "," + f2(fr.py(s.y[i]));
            if (s.markers)
                svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n", f2(fr.px(s.x[i])),
                                   f2(fr.py(s.y[i])), color);
        }
        flush();
    }
    svg += "</g>\n";

    // Legend.
    double ly = fr.y0 + 14;
    for (std::size_t k = 0; k < p.series.size(); ++k) {
        if (p.series[k].label.empty()) continue;
        const char* color = kPalette[k % std::size(kPalette)];
        const double lx = fr.x0 + fr.w - 130;
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                           f2(lx), f2(ly - 4), f2(lx + 18), color);
        svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n", f2(lx + 22), f2(ly),
                           esc(p.series[k].label));
        ly += 14;
    }
}

void write_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Panel>& panels,
               int columns = 2) {
    write_file_atomic(path, render_svg(title, panels, columns));
}

Panel time_panel(const std::string& title, const std::string& y_label) {
    Panel p;
    p.title = title;
    p.x_label = "t (hbar/eps)";
    p.y_label = y_label;
    p.time_axis = true;
    return p;
}

std::string stem_of(const std::filesystem::path& p) { return p.stem().string(); }

}  // namespace

std::string render_svg(const std::string& title, const std::vector<Panel>& panels, int columns) {
    if (panels.empty()) throw ConfigError("nothing to plot");
    columns = std::max(1, std::min(columns, static_cast<int>(panels.size())));
    const int rows = (static_cast<int>(panels.size()) + columns - 1) / columns;
    const double width = columns * kPanelWidth;
    const double height = kTitleHeight + rows * kPanelHeight;
    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\">\n",
        f2(width), f2(height));
    svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"#fff\"/>\n", f2(width), f2(height));
    svg += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", f2(width / 2),
                       esc(title));
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const double ox = static_cast<double>(static_cast<int>(i) % columns) * kPanelWidth;
        const double oy = kTitleHeight + static_cast<double>(static_cast<int>(i) / columns) * kPanelHeight;
        render_panel(svg, panels[i], ox, oy);
    }
    svg += "</svg>\n";
    return svg;
}

void plot_gate_csv(const std::filesystem::path& csv, const std::filesystem::path& svg,
                   std::span<const double> switching_times) {
    const CsvTable t = read_csv(csv);
    const auto time = t.numbers("t_scaled");
    Panel p = time_panel("purity", "P(t)");
    p.series.push_back({"P", time, t.numbers("purity")});
    Panel f = time_panel("fidelity", "F(t)");
    f.series.push_back({"F", time, t.numbers("fidelity")});
    p.marks.assign(switching_times.begin(), switching_times.end());
    f.marks = p.marks;
    p.y_max = f.y_max = 1.02;
    f.y_min = -0.02;
    write_svg(svg, stem_of(csv), {p, f});
}

void plot_levels_csv(const std::filesystem::path& csv, const std::filesystem::path& svg, std::size_t bins,
                     double s_max) {
    const CsvTable t = read_csv(csv);
    std::vector<double> spacings;
    for (double s : t.numbers("spacing"))
        if (std::isfinite(s)) spacings.push_back(s);
    if (spacings.empty()) throw ParseError(csv.string() + ": no spacings");
    const SpacingStatistics st = spacing_statistics(spacings, static_cast<int>(bins), s_max);
    Panel p;
    p.title = fmt::format("KS Poisson {:.3f}, Wigner-Dyson {:.3f}", st.ks_poisson, st.ks_wigner_dyson);
    p.x_label = "s";
    p.y_label = "P(s)";
    Series hist{"histogram", {}, st.density, true};
    for (std::size_t b = 0; b <= st.density.size(); ++b) hist.x.push_back(static_cast<double>(b) * st.bin_width());
    Series poisson{"exp(-s)", {}, {}};
    Series wd{"Wigner-Dyson", {}, {}};
    for (int i = 0; i <= 200; ++i) {
        const double s = s_max * i / 200.0;
        poisson.x.push_back(s);
        poisson.y.push_back(poisson_pdf(s));
        wd.x.push_back(s);
        wd.y.push_back(wigner_dyson_pdf(s));
    }
    p.series = {hist, poisson, wd};
    p.y_min = 0;
    write_svg(svg, stem_of(csv), {p}, 1);
}

void plot_echo_csv(const std::filesystem::path& csv, const std::filesystem::path& svg) {
    const CsvTable t = read_csv(csv);
    Panel p = time_panel("Loschmidt echo", "M(t)");
    p.log_y = true;
    p.series.push_back({"M", t.numbers("t_scaled"), t.numbers("M")});
    write_svg(svg, stem_of(csv), {p}, 1);
}

void plot_memory_csv(const std::filesystem::path& csv, const std::filesystem::path& svg) {
    const CsvTable t = read_csv(csv);
    const auto time = t.numbers("t");
    Panel w = time_panel("memory function", "W(t)");
    w.series.push_back({"W", time, t.numbers("W")});
    Panel c = time_panel("variance times memory", "C W(t)");
    c.series.push_back({"C W", time, t.numbers("C_times_W")});
    write_svg(svg, stem_of(csv), {w, c});
}

void plot_variance_csv(const std::filesystem::path& csv, const std::filesystem::path& svg) {
    const CsvTable t = read_csv(csv);
    const auto jx = t.numbers("J_x");
    const auto kind = t.strings("kind");
    const auto avg = t.numbers("avg");
    const auto var = t.numbers("variance");
    Panel c;
    c.title = "canonical variance";
    c.x_label = "J_x (eps)";
    c.y_label = "C (eps^2)";
    Panel a;
    a.title = "canonical average";
    a.x_label = c.x_label;
    a.y_label = "|avg| (eps)";
    for (const std::string k : {"xx", "zz"}) {
        Series sv{k, {}, {}, false, true};
        Series sa{k, {}, {}, false, true};
        for (std::size_t i = 0; i < jx.size(); ++i) {
            if (kind[i] != k) continue;
            sv.x.push_back(jx[i]);
            sv.y.push_back(var[i]);
            sa.x.push_back(jx[i]);
            sa.y.push_back(std::abs(avg[i]));
        }
        if (sv.x.empty()) continue;
        c.series.push_back(sv);
        a.series.push_back(sa);
    }
    c.y_min = a.y_min = 0;
    write_svg(svg, stem_of(csv), {c, a});
}

PlotReport emit_plots(const std::filesystem::path& dir, const CampaignConfig& cfg) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("no output directory " + dir.string());
    PlotReport report;
    const auto out = dir / "plots";
    const auto tau = build_pulse_schedule(cfg.control).switching_times();

    std::vector<std::filesystem::path> csvs;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
    std::sort(csvs.begin(), csvs.end());

    const std::regex gate_re(R"(gate_(xx|zz)_J([^_]+)_s(\d+)_r(\d+)\.csv)");
    const std::regex echo_re(R"(echo_J([^_]+)_r(\d+)\.csv)");
    const std::regex memory_re(R"(memory_(xx|zz)_J([^_]+)_r(\d+)\.csv)");
    const std::regex rabi_re(R"(rabi(\d)_J([^_]+)_r(\d+)\.csv)");

    // Overlay groups: key -> (J_x, file).
    std::map<std::string, std::vector<std::pair<double, std::filesystem::path>>> gate_groups, echo_groups,
        memory_groups, rabi_groups;

    for (const auto& csv : csvs) {
        const std::string name = csv.filename().string();
        const auto svg = out / (csv.stem().string() + ".svg");
        std::smatch m;
        try {
            if (std::regex_match(name, m, gate_re)) {
                plot_gate_csv(csv, svg, tau);
                gate_groups[fmt::format("{}_s{}_r{}", m[1].str(), m[3].str(), m[4].str())].emplace_back(
                    std::stod(m[2].str()), csv);
            } else if (std::regex_match(name, m, rabi_re)) {
                plot_gate_csv(csv, svg);
                rabi_groups[fmt::format("rabi{}_r{}", m[1].str(), m[3].str())].emplace_back(std::stod(m[2].str()),
                                                                                           csv);
            } else if (name.starts_with("levels_")) {
                plot_levels_csv(csv, svg, cfg.spectral.bins, cfg.spectral.s_max);
            } else if (std::regex_match(name, m, echo_re)) {
                plot_echo_csv(csv, svg);
                echo_groups[fmt::format("r{}", m[2].str())].emplace_back(std::stod(m[1].str()), csv);
            } else if (std::regex_match(name, m, memory_re)) {
                plot_memory_csv(csv, svg);
                memory_groups[fmt::format("{}_r{}", m[1].str(), m[3].str())].emplace_back(std::stod(m[2].str()), csv);
            } else if (name.starts_with("variance_")) {
                plot_variance_csv(csv, svg);
            } else {
                continue;
            }
            report.written.push_back(svg);
        } catch (const Error& e) {
            report.errors.push_back(e.what());
        }
    }

    auto overlay = [&](const std::string& name, const std::string& title, auto&& build) {
        try {
            const auto path = out / name;
            std::vector<Panel> panels = build();
            write_svg(path, title, panels);
            report.written.push_back(path);
        } catch (const Error& e) {
            report.errors.push_back(e.what());
        }
    };

    for (auto& [key, files] : gate_groups) {
        std::sort(files.begin(), files.end());
        overlay("fig_gate_" + key + ".svg", "gate " + key, [&] {
            Panel p = time_panel("purity", "P(t)");
            Panel f = time_panel("fidelity", "F(t)");
            p.marks = f.marks = tau;
            for (const auto& [jx, csv] : files) {
                const CsvTable t = read_csv(csv);
                const std::string label = "J_x=" + format_jx(jx);
                p.series.push_back({label, t.numbers("t_scaled"), t.numbers("purity")});
                f.series.push_back({label, t.numbers("t_scaled"), t.numbers("fidelity")});
            }
            return std::vector<Panel>{p, f};
        });
    }
    for (auto& [key, files] : rabi_groups) {
        std::sort(files.begin(), files.end());
        overlay("fig_" + key + ".svg", "Rabi detector " + key, [&] {
            Panel p = time_panel("purity", "P(t)");
            Panel f = time_panel("fidelity", "F(t)");
            for (const auto& [jx, csv] : files) {
                const CsvTable t = read_csv(csv);
                const std::string label = "J_x=" + format_jx(jx);
                p.series.push_back({label, t.numbers("t_scaled"), t.numbers("purity")});
                f.series.push_back({label, t.numbers("t_scaled"), t.numbers("fidelity")});
            }
            return std::vector<Panel>{p, f};
        });
    }
    for (auto& [key, files] : echo_groups) {
        std::sort(files.begin(), files.end());
        overlay("fig_echo_" + key + ".svg", "Loschmidt echo " + key, [&] {
            Panel shorter = time_panel("short times", "M(t)");
            Panel longer = time_panel("long times", "M(t)");
            shorter.log_y = longer.log_y = true;
            for (const auto& [jx, csv] : files) {
                const CsvTable t = read_csv(csv);
                const auto time = t.numbers("t_scaled");
                const auto m = t.numbers("M");
                const std::string label = "J_x=" + format_jx(jx);
                longer.series.push_back({label, time, m});
                const std::size_t n = std::max<std::size_t>(2, time.size() / 10);
                shorter.series.push_back({label, {time.begin(), time.begin() + static_cast<long>(std::min(n, time.size()))},
                                          {m.begin(), m.begin() + static_cast<long>(std::min(n, m.size()))}});
            }
            return std::vector<Panel>{shorter, longer};
        });
    }
    for (auto& [key, files] : memory_groups) {
        std::sort(files.begin(), files.end());
        overlay("fig_memory_" + key + ".svg", "variance times memory " + key, [&] {
            Panel c = time_panel("C W(t)", "C W(t)");
            Panel w = time_panel("W(t)", "W(t)");
            for (const auto& [jx, csv] : files) {
                const CsvTable t = read_csv(csv);
                const std::string label = "J_x=" + format_jx(jx);
                c.series.push_back({label, t.numbers("t"), t.numbers("C_times_W")});
                w.series.push_back({label, t.numbers("t"), t.numbers("W")});
            }
            return std::vector<Panel>{c, w};
        });
    }
    return report;
}

}  // namespace qcflaw
