#include "dstf/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dstf::cli {

namespace {

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

}  // namespace

std::string render_svg(const std::string& title, const std::vector<std::string>& x_labels,
                       const std::vector<Series>& series, int width, int height) {
    if (x_labels.empty()) throw std::invalid_argument("plot needs at least one point");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : series) {
        if (s.values.size() != x_labels.size()) throw std::invalid_argument("series length differs from the x axis");
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi - lo < 1e-12) {
        const double pad = std::max(1.0, std::abs(lo) * 0.1);
        lo -= pad;
        hi += pad;
    }
    const double left = 70, right = 20, top = 40, bottom = 50;
    const double pw = width - left - right;
    const double ph = height - top - bottom;
    const std::size_t n = x_labels.size();
    auto px = [&](std::size_t i) { return left + (n == 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
    auto py = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
       << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        os << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
        os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(v) << "\" y2=\"" << py(v)
           << "\" stroke=\"#eee\"/>\n";
    }
    os << "<text x=\"" << left << "\" y=\"" << height - 20 << "\">" << escape(x_labels.front()) << "</text>\n";
    os << "<text x=\"" << left + pw << "\" y=\"" << height - 20 << "\" text-anchor=\"end\">"
       << escape(x_labels.back()) << "</text>\n";
    double legend_x = left + 10;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << escape(s.color) << "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < n; ++i) os << px(i) << ',' << py(s.values[i]) << ' ';
        os << "\"/>\n";
        os << "<rect x=\"" << legend_x << "\" y=\"" << top + 8 << "\" width=\"14\" height=\"3\" fill=\""
           << escape(s.color) << "\"/>\n";
        os << "<text x=\"" << legend_x + 18 << "\" y=\"" << top + 14 << "\">" << escape(s.label) << "</text>\n";
        legend_x += 30 + 7.0 * static_cast<double>(s.label.size());
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace dstf::cli
