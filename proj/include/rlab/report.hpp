// Metric series bookkeeping and report export: one CSV per method plus a
// combined SVG chart with Wilson bands. The SVG is written directly (no
// plotting dependency) and embeds its own coordinate mapping so the bands
// can be decoded back out of the file.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rlab/common.hpp"
#include "rlab/metrics.hpp"

namespace rlab {

struct MetricPoint {
    std::uint64_t step = 0;         // impression count at this checkpoint
    std::uint64_t impressions = 0;  // cumulative
    std::uint64_t clicks = 0;       // cumulative
    double ctr = 0.0;
    double ci_low = 0.0;
    double ci_high = 1.0;
    std::optional<double> oracle_ctr;
};

struct MetricSeries {
    std::string method;
    std::vector<MetricPoint> points;
};

inline void append_checkpoint(MetricSeries& s, std::uint64_t step, std::uint64_t impressions,
                              std::uint64_t clicks, std::optional<double> oracle = std::nullopt) {
    MetricPoint p;
    p.step = step;
    p.impressions = impressions;
    p.clicks = clicks;
    p.ctr = static_cast<double>(clicks) / static_cast<double>(impressions);
    Interval ci = wilson_interval(clicks, impressions);
    p.ci_low = ci.low;
    p.ci_high = ci.high;
    p.oracle_ctr = oracle;
    s.points.push_back(std::move(p));
}

inline void validate_series(const MetricSeries& s) {
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        const MetricPoint& p = s.points[i];
        if (p.clicks > p.impressions)
            throw ContractError("metric series: clicks exceed impressions at row " +
                                std::to_string(i));
        if (!(p.ci_low <= p.ctr && p.ctr <= p.ci_high))
            throw ContractError("metric series: interval does not bracket ctr at row " +
                                std::to_string(i));
        if (i > 0) {
            if (s.points[i - 1].impressions > p.impressions)
                throw ContractError("metric series: impressions decrease at row " +
                                    std::to_string(i));
            if (s.points[i - 1].step >= p.step)
                throw ContractError("metric series: steps not increasing at row " +
                                    std::to_string(i));
        }
    }
}

// Merge same-method replicas by summing counts at each shared checkpoint
// step; intervals are recomputed on the pooled counts and oracle values are
// averaged over the replicas that recorded one.
inline MetricSeries pool_series(const std::vector<MetricSeries>& replicas) {
    if (replicas.empty()) throw ContractError("pool_series: no replicas");
    MetricSeries out;
    out.method = replicas.front().method;
    std::size_t rows = replicas.front().points.size();
    for (const MetricSeries& r : replicas) {
        if (r.method != out.method) throw ContractError("pool_series: mixed methods");
        rows = std::min(rows, r.points.size());
    }
    for (std::size_t i = 0; i < rows; ++i) {
        std::uint64_t impressions = 0, clicks = 0;
        double oracle_sum = 0.0;
        std::size_t oracle_n = 0;
        for (const MetricSeries& r : replicas) {
            const MetricPoint& p = r.points[i];
            if (p.step != replicas.front().points[i].step)
                throw ContractError("pool_series: checkpoint steps disagree across replicas");
            impressions += p.impressions;
            clicks += p.clicks;
            if (p.oracle_ctr) {
                oracle_sum += *p.oracle_ctr;
                ++oracle_n;
            }
        }
        std::optional<double> oracle;
        if (oracle_n > 0) oracle = oracle_sum / static_cast<double>(oracle_n);
        append_checkpoint(out, replicas.front().points[i].step, impressions, clicks, oracle);
    }
    return out;
}

// Shortest round-trip decimal form, so identical runs produce identical bytes.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline constexpr const char* kMetricCsvHeader =
    "step,impressions,clicks,ctr,ci_low,ci_high,oracle_ctr";

inline void write_metric_csv(const std::string& path, const MetricSeries& s) {
    validate_series(s);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << kMetricCsvHeader << '\n';
    for (const MetricPoint& p : s.points) {
        out << p.step << ',' << p.impressions << ',' << p.clicks << ',' << fmt_double(p.ctr)
            << ',' << fmt_double(p.ci_low) << ',' << fmt_double(p.ci_high) << ',';
        if (p.oracle_ctr) out << fmt_double(*p.oracle_ctr);
        out << '\n';
    }
    if (!out.flush()) throw IoError("write failed: " + path);
}

// -------------------------------------------------- SVG chart

struct ChartLayout {
    double x0 = 64.0, y0 = 24.0;    // top-left of the plot rectangle
    double w = 640.0, h = 360.0;    // plot rectangle size in px
    double xmin = 0.0, xmax = 1.0;  // data ranges
    double ymin = 0.0, ymax = 1.0;

    double sx(double x) const { return x0 + w * (x - xmin) / (xmax - xmin); }
    double sy(double y) const { return y0 + h * (ymax - y) / (ymax - ymin); }
    double inv_y(double py) const { return ymax - (py - y0) * (ymax - ymin) / h; }
    double inv_x(double px) const { return xmin + (px - x0) * (xmax - xmin) / w; }
};

inline constexpr std::array<const char*, 8> kChartPalette = {
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

namespace detail {

inline ChartLayout chart_layout(const std::vector<MetricSeries>& methods) {
    ChartLayout lay;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = xmax;
    for (const MetricSeries& s : methods)
        for (const MetricPoint& p : s.points) {
            xmin = std::min(xmin, static_cast<double>(p.step));
            xmax = std::max(xmax, static_cast<double>(p.step));
            ymin = std::min({ymin, p.ci_low, p.oracle_ctr.value_or(p.ci_low)});
            ymax = std::max({ymax, p.ci_high, p.oracle_ctr.value_or(p.ci_high)});
        }
    if (!std::isfinite(xmin)) throw ContractError("chart: no data points");
    if (xmax <= xmin) xmax = xmin + 1.0;  // single checkpoint still gets a valid scale
    double pad = std::max(0.02, 0.08 * (ymax - ymin));
    ymin = std::max(0.0, ymin - pad);
    ymax = std::min(1.0, ymax + pad);
    if (ymax <= ymin) ymax = ymin + 1e-3;
    lay.xmin = xmin;
    lay.xmax = xmax;
    lay.ymin = ymin;
    lay.ymax = ymax;
    return lay;
}

inline void svg_points(std::string& out, const std::vector<std::pair<double, double>>& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) out += ' ';
        out += fmt_double(pts[i].first);
        out += ',';
        out += fmt_double(pts[i].second);
    }
}

}  // namespace detail

// One band polygon and one center polyline per method, plus a dashed oracle
// line where recorded. The <desc id="layout"> element carries the pixel
// mapping so tests (or scripts) can decode data values back out of the file.
inline void write_chart_svg(const std::string& path, const std::vector<MetricSeries>& methods,
                            const std::string& title = "cumulative CTR") {
    for (const MetricSeries& s : methods) validate_series(s);
    ChartLayout lay = detail::chart_layout(methods);

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"780\" height=\"470\" "
           "viewBox=\"0 0 780 470\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<desc id=\"layout\">x0=" + fmt_double(lay.x0) + " y0=" + fmt_double(lay.y0) +
           " w=" + fmt_double(lay.w) + " h=" + fmt_double(lay.h) + " xmin=" + fmt_double(lay.xmin) +
           " xmax=" + fmt_double(lay.xmax) + " ymin=" + fmt_double(lay.ymin) +
           " ymax=" + fmt_double(lay.ymax) + "</desc>\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"780\" height=\"470\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt_double(lay.x0 + lay.w / 2) + "\" y=\"16\" text-anchor=\"middle\">" +
           title + "</text>\n";

    // axes and ticks
    svg += "<rect x=\"" + fmt_double(lay.x0) + "\" y=\"" + fmt_double(lay.y0) + "\" width=\"" +
           fmt_double(lay.w) + "\" height=\"" + fmt_double(lay.h) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double fx = lay.xmin + (lay.xmax - lay.xmin) * i / 5.0;
        double fy = lay.ymin + (lay.ymax - lay.ymin) * i / 5.0;
        double px = lay.sx(fx), py = lay.sy(fy);
        svg += "<line x1=\"" + fmt_double(px) + "\" y1=\"" + fmt_double(lay.y0 + lay.h) +
               "\" x2=\"" + fmt_double(px) + "\" y2=\"" + fmt_double(lay.y0 + lay.h + 4) +
               "\" stroke=\"#333\"/>\n";
        svg += "<text class=\"tick\" x=\"" + fmt_double(px) + "\" y=\"" +
               fmt_double(lay.y0 + lay.h + 16) + "\" text-anchor=\"middle\">" +
               fmt_double(std::round(fx)) + "</text>\n";
        svg += "<line x1=\"" + fmt_double(lay.x0 - 4) + "\" y1=\"" + fmt_double(py) + "\" x2=\"" +
               fmt_double(lay.x0) + "\" y2=\"" + fmt_double(py) + "\" stroke=\"#333\"/>\n";
        svg += "<text class=\"tick\" x=\"" + fmt_double(lay.x0 - 8) + "\" y=\"" +
               fmt_double(py + 4) + "\" text-anchor=\"end\">" +
               fmt_double(std::round(fy * 1000.0) / 1000.0) + "</text>\n";
    }

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const MetricSeries& s = methods[mi];
        const char* color = kChartPalette[mi % kChartPalette.size()];
        if (s.points.empty()) continue;

        std::vector<std::pair<double, double>> band;
        band.reserve(2 * s.points.size());
        for (const MetricPoint& p : s.points)
            band.emplace_back(lay.sx(static_cast<double>(p.step)), lay.sy(p.ci_high));
        for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
            band.emplace_back(lay.sx(static_cast<double>(it->step)), lay.sy(it->ci_low));
        svg += "<polygon class=\"band\" id=\"band-" + s.method + "\" fill=\"" + color +
               "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        detail::svg_points(svg, band);
        svg += "\"/>\n";

        std::vector<std::pair<double, double>> line;
        line.reserve(s.points.size());
        for (const MetricPoint& p : s.points)
            line.emplace_back(lay.sx(static_cast<double>(p.step)), lay.sy(p.ctr));
        svg += "<polyline class=\"line\" id=\"line-" + s.method + "\" fill=\"none\" stroke=\"" +
               std::string(color) + "\" stroke-width=\"1.5\" points=\"";
        detail::svg_points(svg, line);
        svg += "\"/>\n";
        if (s.points.size() == 1)
            svg += "<circle cx=\"" + fmt_double(line[0].first) + "\" cy=\"" +
                   fmt_double(line[0].second) + "\" r=\"3\" fill=\"" + color + "\"/>\n";

        bool any_oracle = false;
        std::vector<std::pair<double, double>> oracle;
        for (const MetricPoint& p : s.points)
            if (p.oracle_ctr) {
                any_oracle = true;
                oracle.emplace_back(lay.sx(static_cast<double>(p.step)), lay.sy(*p.oracle_ctr));
            }
        if (any_oracle) {
            svg += "<polyline class=\"oracle\" id=\"oracle-" + s.method +
                   "\" fill=\"none\" stroke=\"" + std::string(color) +
                   "\" stroke-width=\"1\" stroke-dasharray=\"4 3\" points=\"";
            detail::svg_points(svg, oracle);
            svg += "\"/>\n";
        }

        double ly = lay.y0 + 14.0 + 16.0 * static_cast<double>(mi);
        double lx = lay.x0 + lay.w - 150.0;
        svg += "<rect class=\"swatch\" x=\"" + fmt_double(lx) + "\" y=\"" + fmt_double(ly - 9) +
               "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
        svg += "<text class=\"legend\" x=\"" + fmt_double(lx + 16) + "\" y=\"" + fmt_double(ly) +
               "\">" + s.method + "</text>\n";
    }
    svg += "</svg>\n";

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << svg;
    if (!out.flush()) throw IoError("write failed: " + path);
}

// -------------------------------------------------- report bundle

struct ReportMeta {
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> failures;  // "seed 7: <what>" entries
    std::string started_at;             // wall-clock strings live only here
    std::string finished_at;
    double wall_seconds = 0.0;
};

// Writes <out_dir>/<method>.csv per series, a combined chart.svg, and a
// run_meta.txt sidecar. Everything except the sidecar is a pure function of
// (config, seeds), which is what makes rerun byte-comparison meaningful.
inline void export_report(const std::string& out_dir, const std::vector<MetricSeries>& methods,
                          const ReportMeta& meta) {
    if (methods.empty()) throw ContractError("export_report: no series");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw IoError("cannot create report directory: " + out_dir);

    for (const MetricSeries& s : methods) {
        if (s.method.empty()) throw ContractError("export_report: unnamed series");
        write_metric_csv(out_dir + "/" + s.method + ".csv", s);
    }
    write_chart_svg(out_dir + "/chart.svg", methods);

    std::ofstream sidecar(out_dir + "/run_meta.txt", std::ios::trunc);
    if (!sidecar) throw IoError("cannot open for writing: " + out_dir + "/run_meta.txt");
    sidecar << "config_hash: " << meta.config_hash << '\n';
    sidecar << "seeds:";
    for (std::uint64_t s : meta.seeds) sidecar << ' ' << s;
    sidecar << '\n';
    sidecar << "started_at: " << meta.started_at << '\n';
    sidecar << "finished_at: " << meta.finished_at << '\n';
    sidecar << "wall_seconds: " << fmt_double(meta.wall_seconds) << '\n';
    for (const std::string& f : meta.failures) sidecar << "failure: " << f << '\n';
    if (!sidecar.flush()) throw IoError("write failed: " + out_dir + "/run_meta.txt");
}

}  // namespace rlab
