#include "strata/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace strata {

namespace {

constexpr double kWidth = 480;
constexpr double kHeight = 360;
constexpr double kLeft = 60;
constexpr double kRight = 20;
constexpr double kTop = 36;
constexpr double kBottom = 48;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v)
    {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void finish()
    {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

class Canvas {
public:
    Canvas(const PlotLabels& labels, Range xr, Range yr) : xr_(xr), yr_(yr)
    {
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
             << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
             << "<text x=\"" << num(kWidth / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
             << escape(labels.title) << "</text>\n"
             << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\""
             << num(kWidth - kLeft - kRight) << "\" height=\"" << num(kHeight - kTop - kBottom)
             << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double fx = xr_.lo + (xr_.hi - xr_.lo) * i / 4.0;
            const double fy = yr_.lo + (yr_.hi - yr_.lo) * i / 4.0;
            out_ << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kHeight - kBottom + 14)
                 << "\" text-anchor=\"middle\">" << tick(fx) << "</text>\n"
                 << "<text x=\"" << num(kLeft - 4) << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">"
                 << tick(fy) << "</text>\n";
        }
        out_ << "<text x=\"" << num(kWidth / 2) << "\" y=\"" << num(kHeight - 10) << "\" text-anchor=\"middle\">"
             << escape(labels.x_axis) << "</text>\n"
             << "<text transform=\"translate(14," << num(kHeight / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
             << escape(labels.y_axis) << "</text>\n";
    }

    double px(double x) const { return kLeft + (x - xr_.lo) / (xr_.hi - xr_.lo) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - yr_.lo) / (yr_.hi - yr_.lo) * (kHeight - kTop - kBottom); }

    std::ostringstream& out() { return out_; }

    void legend(int slot, const std::string& label, const char* color)
    {
        const double y = kTop + 14 + 14 * slot;
        out_ << "<rect x=\"" << num(kWidth - kRight - 110) << "\" y=\"" << num(y - 8) << "\" width=\"10\" height=\"10\" fill=\""
             << color << "\"/>\n"
             << "<text x=\"" << num(kWidth - kRight - 96) << "\" y=\"" << num(y + 1) << "\">" << escape(label)
             << "</text>\n";
    }

    std::string finish()
    {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    Range xr_;
    Range yr_;
    std::ostringstream out_;
};

} // namespace

std::string svg_line_plot(const PlotLabels& labels, const std::vector<Series>& series)
{
    Range xr;
    Range yr;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size())
            throw std::invalid_argument("series coordinates differ in length");
        for (double v : s.x)
            xr.add(v);
        for (double v : s.y)
            yr.add(v);
    }
    xr.finish();
    yr.finish();
    Canvas canvas(labels, xr, yr);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        const auto& s = series[i];
        auto& out = canvas.out();
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t j = 0; j < s.x.size(); ++j)
            out << (j ? " " : "") << num(canvas.px(s.x[j])) << ',' << num(canvas.py(s.y[j]));
        out << "\"/>\n";
        for (std::size_t j = 0; j < s.x.size(); ++j)
            out << "<circle cx=\"" << num(canvas.px(s.x[j])) << "\" cy=\"" << num(canvas.py(s.y[j]))
                << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        canvas.legend(static_cast<int>(i), s.label, color);
    }
    return canvas.finish();
}

std::string svg_scatter_plot(const PlotLabels& labels, const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<int>& group)
{
    if (x.size() != y.size() || x.size() != group.size())
        throw std::invalid_argument("scatter coordinates and groups differ in length");
    Range xr;
    Range yr;
    for (double v : x)
        xr.add(v);
    for (double v : y)
        yr.add(v);
    xr.finish();
    yr.finish();
    Canvas canvas(labels, xr, yr);
    int max_group = -1;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const char* color = kPalette[static_cast<std::size_t>(std::max(group[i], 0)) % std::size(kPalette)];
        canvas.out() << "<circle cx=\"" << num(canvas.px(x[i])) << "\" cy=\"" << num(canvas.py(y[i]))
                     << "\" r=\"1.6\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
        max_group = std::max(max_group, group[i]);
    }
    for (int gid = 0; gid <= max_group && gid < static_cast<int>(std::size(kPalette)); ++gid)
        canvas.legend(gid, "cluster " + std::to_string(gid), kPalette[gid]);
    return canvas.finish();
}

} // namespace strata
