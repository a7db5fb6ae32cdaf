#include "milda/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace milda {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
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

struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame frame_for(double x0, double x1, double y0, double y1) {
    if (!(x1 > x0)) { x0 -= 0.5; x1 += 0.5; }
    if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
    return {x0, x1, y0, y1};
}

void header(std::ostringstream& o, const std::string& title) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xl, const std::string& yl) {
    const double l = kLeft, r = kWidth - kRight, t = kTop, b = kHeight - kBottom;
    o << "<rect x=\"" << l << "\" y=\"" << t << "\" width=\"" << r - l << "\" height=\"" << b - t
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        o << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << b + 16 << "\" text-anchor=\"middle\">" << num(xv)
          << "</text>\n";
        o << "<text x=\"" << l - 6 << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
          << "</text>\n";
    }
    o << "<text x=\"" << (l + r) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(xl)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << (t + b) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (t + b) / 2
      << ")\">" << escape(yl) << "</text>\n";
}

}  // namespace

std::string svg_line_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          const std::string& y_label) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0.0;
    const Frame f = frame_for(x0, x1, y0, y1);
    std::ostringstream o;
    header(o, title);
    axes(o, f, x_label, y_label);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            o << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
        }
        o << "\"/>\n";
        const double ly = kTop + 14.0 + 18.0 * static_cast<double>(k);
        o << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kWidth - kRight + 30
          << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << kWidth - kRight + 34 << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string svg_score_map(const std::vector<ScoreMapRow>& rows, const std::string& title) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& r : rows) {
        x0 = std::min(x0, r.x);
        x1 = std::max(x1, r.x);
        y0 = std::min(y0, r.y);
        y1 = std::max(y1, r.y);
    }
    if (rows.empty()) x0 = x1 = y0 = y1 = 0.0;
    const Frame f = frame_for(x0, x1, y0, y1);
    std::ostringstream o;
    header(o, title);
    axes(o, f, "axis 1", "axis 2");
    for (const auto& r : rows) {
        const double s = std::clamp(r.score, 0.0, 1.0);
        const int red = static_cast<int>(std::lround(255.0 * s));
        const int blue = 255 - red;
        char color[16];
        std::snprintf(color, sizeof(color), "#%02x40%02x", red, blue);
        if (r.oracle_label == 1) {
            o << "<rect x=\"" << num(f.px(r.x) - 2.5) << "\" y=\"" << num(f.py(r.y) - 2.5)
              << "\" width=\"5\" height=\"5\" fill=\"" << color << "\"/>\n";
        } else {
            o << "<circle cx=\"" << num(f.px(r.x)) << "\" cy=\"" << num(f.py(r.y)) << "\" r=\"2.5\" fill=\"" << color
              << "\"/>\n";
        }
    }
    const double lx = kWidth - kRight + 10;
    o << "<text x=\"" << lx << "\" y=\"" << kTop + 14 << "\">score 0 = blue</text>\n";
    o << "<text x=\"" << lx << "\" y=\"" << kTop + 32 << "\">score 1 = red</text>\n";
    o << "<text x=\"" << lx << "\" y=\"" << kTop + 50 << "\">square = positive</text>\n";
    o << "</svg>\n";
    return o.str();
}

std::string svg_bar_plot(const std::vector<std::string>& names, const std::vector<double>& means,
                         const std::vector<double>& stds, const std::string& title, const std::string& y_label) {
    double y1 = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i)
        y1 = std::max(y1, means[i] + (i < stds.size() ? stds[i] : 0.0));
    const Frame f = frame_for(0.0, static_cast<double>(std::max<std::size_t>(names.size(), 1)), 0.0, y1 > 0 ? y1 : 1.0);
    std::ostringstream o;
    header(o, title);
    axes(o, f, "", y_label);
    for (std::size_t i = 0; i < names.size() && i < means.size(); ++i) {
        const double xa = f.px(static_cast<double>(i) + 0.15);
        const double xb = f.px(static_cast<double>(i) + 0.85);
        const double top = f.py(means[i]);
        o << "<rect x=\"" << num(xa) << "\" y=\"" << num(top) << "\" width=\"" << num(xb - xa) << "\" height=\""
          << num(f.py(0.0) - top) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
        if (i < stds.size() && stds[i] > 0.0) {
            const double xm = (xa + xb) / 2;
            o << "<line x1=\"" << num(xm) << "\" y1=\"" << num(f.py(means[i] - stds[i])) << "\" x2=\"" << num(xm)
              << "\" y2=\"" << num(f.py(means[i] + stds[i])) << "\" stroke=\"black\"/>\n";
        }
        const double ly = kTop + 14.0 + 18.0 * static_cast<double>(i);
        o << "<text x=\"" << kWidth - kRight + 10 << "\" y=\"" << ly << "\" fill=\""
          << kPalette[i % std::size(kPalette)] << "\">" << escape(names[i]) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string score_map_csv(const std::vector<ScoreMapRow>& rows) {
    std::ostringstream o;
    o << "x,y,score,oracle_label\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%d\n", r.x, r.y, r.score, r.oracle_label);
        o << buf;
    }
    return o.str();
}

}  // namespace milda
