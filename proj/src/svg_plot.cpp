#include "histo/svg_plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "histo/errors.hpp"

namespace histo {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

constexpr int kWidth = 640, kHeight = 480;
constexpr int kMarginL = 64, kMarginR = 24, kMarginT = 40, kMarginB = 48;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::ofstream open_svg(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write plot: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return out;
}

double px(double v01, bool horizontal) {
    if (horizontal)
        return kMarginL + v01 * (kWidth - kMarginL - kMarginR);
    return kHeight - kMarginB - v01 * (kHeight - kMarginT - kMarginB);
}

void axes_01(std::ofstream& out, const std::string& title, const std::string& xlabel,
             const std::string& ylabel) {
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
    out << "<rect x=\"" << kMarginL << "\" y=\"" << kMarginT << "\" width=\""
        << kWidth - kMarginL - kMarginR << "\" height=\"" << kHeight - kMarginT - kMarginB
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        out << "<text x=\"" << px(v, true) << "\" y=\"" << kHeight - kMarginB + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt(v) << "</text>\n";
        out << "<text x=\"" << kMarginL - 8 << "\" y=\"" << px(v, false) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
            << "</text>\n";
        out << "<line x1=\"" << px(v, true) << "\" y1=\"" << px(0, false) << "\" x2=\""
            << px(v, true) << "\" y2=\"" << px(0, false) + 4 << "\" stroke=\"#333\"/>\n";
    }
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xlabel
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << ylabel << "</text>\n";
}

} // namespace

void write_roc_svg(const std::filesystem::path& path, const std::string& title,
                   const std::vector<PlotSeries>& series) {
    auto out = open_svg(path);
    axes_01(out, title, "false positive rate", "true positive rate");
    out << "<line x1=\"" << px(0, true) << "\" y1=\"" << px(0, false) << "\" x2=\""
        << px(1, true) << "\" y2=\"" << px(1, false)
        << "\" stroke=\"#bbb\" stroke-dasharray=\"6,4\"/>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i)
            out << px(std::clamp(series[s].x[i], 0.0, 1.0), true) << ","
                << px(std::clamp(series[s].y[i], 0.0, 1.0), false) << " ";
        out << "\"/>\n";
        const int ly = kMarginT + 18 + int(s) * 18;
        out << "<line x1=\"" << kWidth - 220 << "\" y1=\"" << ly << "\" x2=\""
            << kWidth - 196 << "\" y2=\"" << ly << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << kWidth - 190 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].label
            << "</text>\n";
    }
    out << "</svg>\n";
}

void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<std::string>& group_labels,
                         const std::vector<std::string>& bar_labels,
                         const std::vector<std::vector<double>>& values) {
    auto out = open_svg(path);
    axes_01(out, title, "", "accuracy");
    const std::size_t groups = group_labels.size();
    const std::size_t bars = bar_labels.size();
    const double plot_w = kWidth - kMarginL - kMarginR;
    const double group_w = plot_w / double(std::max<std::size_t>(groups, 1));
    const double bar_w = group_w * 0.8 / double(std::max<std::size_t>(bars, 1));
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t b = 0; b < bars && b < values[g].size(); ++b) {
            const double v = std::clamp(values[g][b], 0.0, 1.0);
            const double x = kMarginL + group_w * double(g) + group_w * 0.1 + bar_w * double(b);
            const double y = px(v, false);
            out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w * 0.92
                << "\" height=\"" << px(0, false) - y << "\" fill=\""
                << kPalette[b % std::size(kPalette)] << "\"/>\n";
        }
        out << "<text x=\"" << kMarginL + group_w * (double(g) + 0.5) << "\" y=\""
            << kHeight - kMarginB + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
            << group_labels[g] << "</text>\n";
    }
    for (std::size_t b = 0; b < bars; ++b) {
        const int ly = kMarginT + 18 + int(b) * 18;
        out << "<rect x=\"" << kWidth - 220 << "\" y=\"" << ly - 9
            << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[b % std::size(kPalette)]
            << "\"/>\n";
        out << "<text x=\"" << kWidth - 202 << "\" y=\"" << ly + 2
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << bar_labels[b]
            << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace histo
