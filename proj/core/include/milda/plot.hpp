#pragma once

#include <string>
#include <vector>

#include "milda/metrics.hpp"

namespace milda {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Line chart; each series gets its own color and a legend entry.
std::string svg_line_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          const std::string& y_label);

/// Points colored by score (blue = 0, red = 1); positives drawn as squares.
std::string svg_score_map(const std::vector<ScoreMapRow>& rows, const std::string& title);

/// Bars with +-1 std whiskers.
std::string svg_bar_plot(const std::vector<std::string>& names, const std::vector<double>& means,
                         const std::vector<double>& stds, const std::string& title, const std::string& y_label);

std::string score_map_csv(const std::vector<ScoreMapRow>& rows);

}  // namespace milda
