#include "rlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rlab {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 70;

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// Round range endpoints outward to a tidy step.
std::pair<double, double> padded_range(double lo, double hi) {
    if (lo > hi) std::swap(lo, hi);
    if (lo == hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.08 * (hi - lo);
    return {lo - pad, hi + pad};
}

void open_svg(std::ostringstream& os, const std::string& title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
       << " font-size=\"16\">" << escape(title) << "</text>\n";
}

void y_axis(std::ostringstream& os, double lo, double hi, const std::string& label) {
    const int x0 = kMarginLeft, y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        const double y = y0 - (y0 - y1) * i / 4.0;
        os << "<line x1=\"" << x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << x0 << "\" y2=\"" << y
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x0 - 8 << "\" y=\"" << y + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
           << "</text>\n";
    }
    os << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (y0 + y1) / 2 << ")\">" << escape(label) << "</text>\n";
}

} // namespace

std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<BarGroup>& bars) {
    std::ostringstream os;
    open_svg(os, title);
    double lo = 0.0, hi = 0.0;
    for (const auto& b : bars) {
        lo = std::min(lo, b.value);
        hi = std::max(hi, b.value);
    }
    auto [rlo, rhi] = padded_range(lo, hi);
    y_axis(os, rlo, rhi, y_label);

    const int x0 = kMarginLeft, y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    const int plot_w = kWidth - kMarginLeft - kMarginRight;
    const int n = static_cast<int>(bars.size());
    if (n > 0) {
        const double slot = static_cast<double>(plot_w) / n;
        const double bar_w = slot * 0.7;
        auto y_of = [&](double v) { return y0 - (y0 - y1) * (v - rlo) / (rhi - rlo); };
        const double y_zero = y_of(std::max(0.0, rlo));
        for (int i = 0; i < n; ++i) {
            const double cx = x0 + slot * (i + 0.5);
            const double yv = y_of(bars[static_cast<size_t>(i)].value);
            const double top = std::min(yv, y_zero);
            const double h = std::abs(yv - y_zero);
            os << "<rect x=\"" << cx - bar_w / 2 << "\" y=\"" << top << "\" width=\"" << bar_w
               << "\" height=\"" << std::max(h, 0.5) << "\" fill=\"#4878b0\"/>\n";
            os << "<text x=\"" << cx << "\" y=\"" << y0 + 16
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
               << escape(bars[static_cast<size_t>(i)].label) << "</text>\n";
        }
        os << "<line x1=\"" << x0 << "\" y1=\"" << y_zero << "\" x2=\"" << x0 + plot_w
           << "\" y2=\"" << y_zero << "\" stroke=\"black\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_scatter(const std::string& title, const std::string& x_label,
                        const std::string& y_label, const std::vector<ScatterPoint>& points) {
    std::ostringstream os;
    open_svg(os, title);
    double xlo = 0.0, xhi = 1.0, ylo = 0.0, yhi = 1.0;
    if (!points.empty()) {
        xlo = xhi = points.front().x;
        ylo = yhi = points.front().y;
        for (const auto& p : points) {
            xlo = std::min(xlo, p.x);
            xhi = std::max(xhi, p.x);
            ylo = std::min(ylo, p.y);
            yhi = std::max(yhi, p.y);
        }
    }
    auto [rxlo, rxhi] = padded_range(xlo, xhi);
    auto [rylo, ryhi] = padded_range(ylo, yhi);
    y_axis(os, rylo, ryhi, y_label);

    const int x0 = kMarginLeft, y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    const int plot_w = kWidth - kMarginLeft - kMarginRight;
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 + plot_w << "\" y2=\"" << y0
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = rxlo + (rxhi - rxlo) * i / 4.0;
        const double x = x0 + plot_w * i / 4.0;
        os << "<line x1=\"" << x << "\" y1=\"" << y0 << "\" x2=\"" << x << "\" y2=\"" << y0 + 4
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << y0 + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
           << "</text>\n";
    }
    os << "<text x=\"" << x0 + plot_w / 2 << "\" y=\"" << kHeight - 24
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
       << escape(x_label) << "</text>\n";

    auto x_of = [&](double v) { return x0 + plot_w * (v - rxlo) / (rxhi - rxlo); };
    auto y_of = [&](double v) { return y0 - (y0 - y1) * (v - rylo) / (ryhi - rylo); };
    for (const auto& p : points) {
        os << "<circle cx=\"" << x_of(p.x) << "\" cy=\"" << y_of(p.y)
           << "\" r=\"4\" fill=\"#b04848\"/>\n";
        os << "<text x=\"" << x_of(p.x) + 6 << "\" y=\"" << y_of(p.y) - 6
           << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape(p.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace rlab
