#pragma once

// Open-loop steering evaluation of clear, rainy and derained streams of one map.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "derain/frame_store.hpp"
#include "derain/metrics.hpp"
#include "derain/model.hpp"
#include "derain/pilotnet.hpp"

namespace derain {

// Inclusive frame range, e.g. an intersection or sharp turn to leave out.
struct FrameRange {
    int first = 0;
    int last = 0;

    bool contains(int f) const { return f >= first && f <= last; }
};

// "10-20,40-45,7" -> ranges; throws ConfigError on malformed text.
std::vector<FrameRange> parse_frame_ranges(const std::string& text);

inline constexpr const char* kClear = "clear";
inline constexpr const char* kHeavyRain = "heavy_rain";
inline constexpr const char* kLightRain = "light_rain";
inline constexpr const char* kDerained = "derained";

struct Condition {
    std::string name;
    torch::Tensor frames;  // [N,3,R,R] in [0,1], same frame order as the report
};

struct SteeringReport {
    std::vector<int> frames;
    std::vector<double> truth;             // steering-wheel degrees
    std::vector<std::string> conditions;   // evaluation order, clear first
    std::map<std::string, std::vector<double>> predictions;
    std::map<std::string, double> mae;
    // Clear predictions (y) regressed on each condition's predictions (x).
    std::map<std::string, RegressionResult> regression_vs_clear;

    // truth - prediction per frame.
    std::vector<double> errors(const std::string& condition) const;
};

// Scores every condition on the same frames. The first condition must be "clear".
SteeringReport evaluate_conditions(PilotCheckpoint& pilot, const std::vector<int>& frames,
                                   const std::vector<double>& truth, const std::vector<Condition>& conditions);

// Builds clear / heavy rain / [light rain] / derained conditions for one map and scores them.
// Frames inside `exclude` are left out of every series.
SteeringReport build_report(PilotCheckpoint& pilot, DerainNet& derainer, const MapFrames& map,
                            const MapFrames* light_rain_map, const std::vector<FrameRange>& exclude,
                            double steering_ratio);

// mae.csv, series.csv, regression.csv plus error-vs-frame and scatter plots.
std::vector<std::filesystem::path> write_report(const SteeringReport& report, const std::filesystem::path& dir);

}  // namespace derain
