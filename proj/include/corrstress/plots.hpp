#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "corrstress/common.hpp"
#include "corrstress/dates.hpp"
#include "corrstress/io.hpp"

namespace corrstress {

// Minimal static SVG emitters for the batch reports. Deterministic output:
// fixed canvas, fixed palette, fixed number formatting.

namespace svg {

inline std::string num(double v) { return format_double(v, 6); }

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    return colors[i % 8];
}

// Piecewise blue-white-orange map on [-1, 1].
inline std::string heat_color(double v) {
    v = std::clamp(v, -1.0, 1.0);
    auto channel = [](double x) {
        return std::to_string(static_cast<int>(std::lround(std::clamp(x, 0.0, 255.0))));
    };
    double r, g, b;
    if (v < 0.0) {
        const double t = -v;
        r = 255.0 * (1.0 - t);
        g = 255.0 * (1.0 - 0.6 * t);
        b = 255.0;
    } else {
        r = 255.0;
        g = 255.0 * (1.0 - 0.55 * v);
        b = 255.0 * (1.0 - v);
    }
    return "rgb(" + channel(r) + "," + channel(g) + "," + channel(b) + ")";
}

}  // namespace svg

struct LineSeries {
    std::string name;
    std::vector<double> values;
};

inline void write_line_chart_svg(const std::string& path, const std::string& title,
                                 const std::vector<Date>& dates,
                                 const std::vector<LineSeries>& series) {
    if (dates.empty() || series.empty()) throw ValidationError("line chart: empty input");
    const double width = 900, height = 420, ml = 70, mr = 170, mt = 40, mb = 40;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& s : series) {
        if (s.values.size() != dates.size()) {
            throw ValidationError("line chart: series length != date count");
        }
        for (double v : s.values) {
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        }
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;

    auto x_at = [&](std::size_t i) {
        return ml + (width - ml - mr) * (dates.size() == 1
                                             ? 0.5
                                             : static_cast<double>(i) /
                                                   static_cast<double>(dates.size() - 1));
    };
    auto y_at = [&](double v) { return height - mb - (height - mt - mb) * (v - lo) / (hi - lo); };

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg::num(width) +
                      "\" height=\"" + svg::num(height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + svg::num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
    // axes
    out += "<line x1=\"" + svg::num(ml) + "\" y1=\"" + svg::num(height - mb) + "\" x2=\"" +
           svg::num(width - mr) + "\" y2=\"" + svg::num(height - mb) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + svg::num(ml) + "\" y1=\"" + svg::num(mt) + "\" x2=\"" + svg::num(ml) +
           "\" y2=\"" + svg::num(height - mb) + "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = lo + (hi - lo) * tick / 4.0;
        out += "<text x=\"" + svg::num(ml - 8) + "\" y=\"" + svg::num(y_at(v) + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_double(v, 4) + "</text>\n";
    }
    out += "<text x=\"" + svg::num(ml) + "\" y=\"" + svg::num(height - mb + 16) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + dates.front().to_string() +
           "</text>\n";
    out += "<text x=\"" + svg::num(width - mr) + "\" y=\"" + svg::num(height - mb + 16) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           dates.back().to_string() + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        std::string points;
        for (std::size_t i = 0; i < dates.size(); ++i) {
            points += svg::num(x_at(i)) + "," + svg::num(y_at(series[s].values[i])) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(svg::palette(s)) +
               "\" stroke-width=\"1.4\" points=\"" + points + "\"/>\n";
        const double ly = mt + 16.0 * static_cast<double>(s);
        out += "<line x1=\"" + svg::num(width - mr + 10) + "\" y1=\"" + svg::num(ly) + "\" x2=\"" +
               svg::num(width - mr + 30) + "\" y2=\"" + svg::num(ly) + "\" stroke=\"" +
               svg::palette(s) + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + svg::num(width - mr + 36) + "\" y=\"" + svg::num(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + series[s].name + "</text>\n";
    }
    out += "</svg>\n";
    write_text_file(path, out);
}

// Side-by-side correlation heatmaps on a shared [-1, 1] color scale.
inline void write_heatmap_pair_svg(const std::string& path, const std::string& left_title,
                                   const Eigen::MatrixXd& left, const std::string& right_title,
                                   const Eigen::MatrixXd& right,
                                   const std::vector<std::string>& labels) {
    if (left.rows() != left.cols() || right.rows() != right.cols() ||
        left.rows() != right.rows() || left.rows() < 1) {
        throw ValidationError("heatmap pair: matrices must be square and same size");
    }
    const int p = static_cast<int>(left.rows());
    const double cell = std::max(12.0, 240.0 / p);
    const double grid = cell * p;
    const double ml = 80, gap = 60, mt = 60, mb = 30;
    const double width = ml + 2 * grid + gap + 30;
    const double height = mt + grid + mb;

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg::num(width) +
                      "\" height=\"" + svg::num(height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto draw = [&](const Eigen::MatrixXd& m, double x0, const std::string& title) {
        out += "<text x=\"" + svg::num(x0 + grid / 2) + "\" y=\"" + svg::num(mt - 12) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + title +
               "</text>\n";
        for (int i = 0; i < p; ++i) {
            for (int j = 0; j < p; ++j) {
                out += "<rect x=\"" + svg::num(x0 + j * cell) + "\" y=\"" +
                       svg::num(mt + i * cell) + "\" width=\"" + svg::num(cell) +
                       "\" height=\"" + svg::num(cell) + "\" fill=\"" +
                       svg::heat_color(m(i, j)) + "\"/>\n";
            }
        }
    };
    draw(left, ml, left_title);
    draw(right, ml + grid + gap, right_title);
    if (p <= 20) {
        for (int i = 0; i < p && i < static_cast<int>(labels.size()); ++i) {
            out += "<text x=\"" + svg::num(ml - 6) + "\" y=\"" +
                   svg::num(mt + i * cell + cell / 2 + 4) +
                   "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
                   labels[static_cast<std::size_t>(i)] + "</text>\n";
        }
    }
    out += "</svg>\n";
    write_text_file(path, out);
}

}  // namespace corrstress
