#ifndef HISTO_SVG_PLOT_HPP
#define HISTO_SVG_PLOT_HPP

#include <filesystem>
#include <string>
#include <vector>

namespace histo {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Line chart over [0,1]x[0,1] with the chance diagonal (ROC overlays).
void write_roc_svg(const std::filesystem::path& path, const std::string& title,
                   const std::vector<PlotSeries>& series);

// Grouped bar chart; values[group][bar] in [0,1].
void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<std::string>& group_labels,
                         const std::vector<std::string>& bar_labels,
                         const std::vector<std::vector<double>>& values);

} // namespace histo

#endif
