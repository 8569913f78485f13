#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace subaru {

// Minimal SVG line charts for the sweep and loss curves. SVG keeps the
// artifact dependency-free while still opening in any browser or image
// viewer.

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace plot_detail {

inline const char* color(size_t i) {
    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

// round tick step to 1/2/5 times a power of ten
inline double nice_step(double span, int target_ticks) {
    if (!(span > 0.0)) return 1.0;
    const double raw = span / std::max(1, target_ticks);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double frac = raw / mag;
    double step = 10.0;
    if (frac <= 1.0) step = 1.0;
    else if (frac <= 2.0) step = 2.0;
    else if (frac <= 5.0) step = 5.0;
    return step * mag;
}

inline std::string fmt_num(double v) {
    char buf[48];
    if (v != 0.0 && (std::abs(v) >= 1e5 || std::abs(v) < 1e-3))
        std::snprintf(buf, sizeof(buf), "%.2g", v);
    else
        std::snprintf(buf, sizeof(buf), "%g", std::round(v * 1e6) / 1e6);
    return buf;
}

}  // namespace plot_detail

inline std::string render_svg_lines(const std::string& title, const std::string& xlabel,
                                    const std::string& ylabel,
                                    const std::vector<PlotSeries>& series, int width = 860,
                                    int height = 520) {
    if (series.empty()) throw std::invalid_argument("plot: no series");
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const PlotSeries& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: ragged series");
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (!std::isfinite(xmin) || !std::isfinite(ymin))
        throw std::invalid_argument("plot: no finite points");
    if (xmax == xmin) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double ypad = 0.06 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const double ml = 70, mr = 24, mt = 42, mb = 56;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
       << " font-size=\"16\">" << title << "</text>\n";

    // gridlines and ticks
    const double xs = plot_detail::nice_step(xmax - xmin, 6);
    const double ys = plot_detail::nice_step(ymax - ymin, 6);
    os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (double x = std::ceil(xmin / xs) * xs; x <= xmax + 1e-9 * xs; x += xs) {
        os << "<line x1=\"" << px(x) << "\" y1=\"" << mt << "\" x2=\"" << px(x) << "\" y2=\""
           << mt + ph << "\" stroke=\"#e5e5e5\"/>\n";
        os << "<text x=\"" << px(x) << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">"
           << plot_detail::fmt_num(x) << "</text>\n";
    }
    for (double y = std::ceil(ymin / ys) * ys; y <= ymax + 1e-9 * ys; y += ys) {
        os << "<line x1=\"" << ml << "\" y1=\"" << py(y) << "\" x2=\"" << ml + pw << "\" y2=\""
           << py(y) << "\" stroke=\"#e5e5e5\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
           << plot_detail::fmt_num(y) << "</text>\n";
    }
    os << "</g>\n";
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#444\"/>\n";

    // axis labels
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xlabel
       << "</text>\n";
    os << "<text x=\"18\" y=\"" << mt + ph / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\""
       << " transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">" << ylabel << "</text>\n";

    // data
    for (size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        os << "<polyline fill=\"none\" stroke=\"" << plot_detail::color(si)
           << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        os << "\"/>\n";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
               << "\" r=\"3\" fill=\"" << plot_detail::color(si) << "\"/>\n";
        }
    }

    // legend
    os << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (size_t si = 0; si < series.size(); ++si) {
        const double ly = mt + 14 + 18 * static_cast<double>(si);
        os << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 126
           << "\" y2=\"" << ly << "\" stroke=\"" << plot_detail::color(si)
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << ml + pw - 120 << "\" y=\"" << ly + 4 << "\">" << series[si].label
           << "</text>\n";
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

inline void write_svg_lines(const std::string& path, const std::string& title,
                            const std::string& xlabel, const std::string& ylabel,
                            const std::vector<PlotSeries>& series, int width = 860,
                            int height = 520) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("plot: cannot write " + path);
    f << render_svg_lines(title, xlabel, ylabel, series, width, height);
}

}  // namespace subaru
