#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace derain::plot {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::array<std::uint8_t, 3> rgb{31, 119, 180};
    bool scatter = false;
};

struct Figure {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    std::vector<std::string> notes;  // extra legend lines, e.g. "R^2 = 0.95"
    int width = 900;
    int height = 520;
};

// Rasterises the figure to a PNG. Non-finite points are skipped.
void save(const Figure& figure, const std::filesystem::path& path);

}  // namespace derain::plot
