#include "stt/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stt::cli {

namespace {

constexpr int kWidth = 640, kHeight = 420;
constexpr int kLeft = 64, kRight = 24, kTop = 40, kBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"};

std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct Range {
    double lo = 0.0, hi = 1.0;
    void expand(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    static Range of(const std::vector<double>& vs) {
        Range r{vs.empty() ? 0.0 : vs[0], vs.empty() ? 1.0 : vs[0]};
        for (double v : vs) r.expand(v);
        if (r.hi == r.lo) r.hi = r.lo + 1.0;
        return r;
    }
};

double sx(double x, const Range& r) {
    return kLeft + (x - r.lo) / (r.hi - r.lo) * (kWidth - kLeft - kRight);
}
double sy(double y, const Range& r) {
    return kHeight - kBottom - (y - r.lo) / (r.hi - r.lo) * (kHeight - kTop - kBottom);
}

void open_svg(std::ofstream& os, const std::string& title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" "
          "text-anchor=\"middle\">"
       << title << "</text>\n";
}

void axes(std::ofstream& os, const Range& xr, const Range& yr, const std::string& x_label,
          const std::string& y_label) {
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
       << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
       << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 18
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(xr.lo)
       << "</text>\n";
    os << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 18
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(xr.hi)
       << "</text>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << kHeight - kBottom
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(yr.lo)
       << "</text>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << kTop + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(yr.hi)
       << "</text>\n";
    os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10
       << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << x_label
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
       << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (kTop + kHeight - kBottom) / 2 << ")\">" << y_label << "</text>\n";
}

} // namespace

void write_line_chart(const std::string& path, const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
    if (series.empty()) throw std::invalid_argument("plot: no series to draw");
    std::vector<double> all_x, all_y;
    for (const auto& s : series) {
        if (s.xs.size() != s.ys.size()) throw std::invalid_argument("plot: series size mismatch");
        all_x.insert(all_x.end(), s.xs.begin(), s.xs.end());
        all_y.insert(all_y.end(), s.ys.begin(), s.ys.end());
    }
    if (all_x.empty()) throw std::invalid_argument("plot: empty series");
    Range xr = Range::of(all_x), yr = Range::of(all_y);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("plot: cannot write " + path);
    open_svg(os, title);
    axes(os, xr, yr, x_label, y_label);
    for (size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.xs.size(); ++i)
            os << (i ? " " : "") << num(sx(s.xs[i], xr)) << "," << num(sy(s.ys[i], yr));
        os << "\"/>\n";
        int ly = kTop + 16 * static_cast<int>(k);
        os << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << ly - 9
           << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        os << "<text x=\"" << kWidth - kRight - 136 << "\" y=\"" << ly
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
}

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& bar_labels, const std::vector<BarGroup>& groups) {
    if (groups.empty() || bar_labels.empty()) throw std::invalid_argument("plot: empty bar chart");
    Range yr{0.0, 0.0};
    for (const auto& g : groups) {
        if (g.values.size() != bar_labels.size())
            throw std::invalid_argument("plot: bar group size mismatch");
        for (double v : g.values) yr.expand(v);
    }
    if (yr.hi == yr.lo) yr.hi = yr.lo + 1.0;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("plot: cannot write " + path);
    open_svg(os, title);
    axes(os, Range{0, 1}, yr, "", "reward");

    double plot_w = kWidth - kLeft - kRight;
    double group_w = plot_w / groups.size();
    double bar_w = group_w * 0.8 / bar_labels.size();
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        double gx = kLeft + group_w * static_cast<double>(gi) + group_w * 0.1;
        for (size_t bi = 0; bi < g.values.size(); ++bi) {
            const char* color = kPalette[bi % (sizeof(kPalette) / sizeof(kPalette[0]))];
            double x = gx + bar_w * static_cast<double>(bi);
            double y0 = sy(std::max(0.0, yr.lo), yr);
            double y1 = sy(g.values[bi], yr);
            double top = std::min(y0, y1);
            os << "<rect x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(bar_w * 0.9)
               << "\" height=\"" << num(std::abs(y0 - y1)) << "\" fill=\"" << color << "\"/>\n";
        }
        os << "<text x=\"" << num(gx + group_w * 0.4) << "\" y=\"" << kHeight - kBottom + 18
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << g.label
           << "</text>\n";
    }
    for (size_t bi = 0; bi < bar_labels.size(); ++bi) {
        const char* color = kPalette[bi % (sizeof(kPalette) / sizeof(kPalette[0]))];
        int ly = kTop + 16 * static_cast<int>(bi);
        os << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << ly - 9
           << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        os << "<text x=\"" << kWidth - kRight - 136 << "\" y=\"" << ly
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << bar_labels[bi] << "</text>\n";
    }
    os << "</svg>\n";
}

} // namespace stt::cli
