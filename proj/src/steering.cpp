#include "derain/steering.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "derain/dataset.hpp"
#include "derain/errors.hpp"
#include "derain/plot.hpp"

namespace fs = std::filesystem;

namespace derain {

std::vector<FrameRange> parse_frame_ranges(const std::string& text) {
    std::vector<FrameRange> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        FrameRange r;
        try {
            const auto dash = item.find('-', 1);
            std::size_t used = 0;
            if (dash == std::string::npos) {
                r.first = r.last = std::stoi(item, &used);
                if (used != item.size()) throw std::invalid_argument(item);
            } else {
                r.first = std::stoi(item.substr(0, dash), &used);
                if (used != dash) throw std::invalid_argument(item);
                const std::string tail = item.substr(dash + 1);
                r.last = std::stoi(tail, &used);
                if (used != tail.size()) throw std::invalid_argument(item);
            }
        } catch (const std::logic_error&) {
            throw ConfigError("bad frame range '" + item + "' (expected N or A-B)");
        }
        if (r.last < r.first) throw ConfigError("frame range '" + item + "' is reversed");
        out.push_back(r);
    }
    return out;
}

std::vector<double> SteeringReport::errors(const std::string& condition) const {
    const auto& pred = predictions.at(condition);
    std::vector<double> e(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) e[i] = truth[i] - pred[i];
    return e;
}

SteeringReport evaluate_conditions(PilotCheckpoint& pilot, const std::vector<int>& frames,
                                   const std::vector<double>& truth, const std::vector<Condition>& conditions) {
    if (frames.size() != truth.size()) throw ShapeError("frame and truth counts differ");
    if (frames.empty()) throw EmptyDatasetError("no frames left to evaluate");
    if (conditions.empty() || conditions.front().name != kClear)
        throw ConfigError("the clear condition must be evaluated first");

    SteeringReport report;
    report.frames = frames;
    report.truth = truth;
    for (const auto& c : conditions) {
        if (c.frames.size(0) != static_cast<std::int64_t>(frames.size()))
            throw IntegrityError("condition '" + c.name + "' has " + std::to_string(c.frames.size(0)) +
                                 " images for " + std::to_string(frames.size()) + " frames");
        auto pred = predict_steering(pilot, pilot_inputs(c.frames, pilot.cfg));
        report.mae[c.name] = mean_absolute_error(pred, truth);
        report.conditions.push_back(c.name);
        report.predictions[c.name] = std::move(pred);
    }
    const auto& clear = report.predictions.at(kClear);
    for (const auto& name : report.conditions)
        report.regression_vs_clear[name] = linear_regression(report.predictions.at(name), clear);
    return report;
}

SteeringReport build_report(PilotCheckpoint& pilot, DerainNet& derainer, const MapFrames& map,
                            const MapFrames* light_rain_map, const std::vector<FrameRange>& exclude,
                            double steering_ratio) {
    if (map.steering.empty()) throw ConfigError("map '" + map.name + "' has no steering data");
    if (map.clear.size(2) != derainer->config().resolution)
        throw ConfigError("map frames are " + std::to_string(map.clear.size(2)) + " px, derainer expects " +
                          std::to_string(derainer->config().resolution));

    std::map<int, double> angle;
    for (const auto& r : map.steering) angle[r.frame_index] = r.drive_wheel_angle_deg;

    std::vector<std::int64_t> rows;
    std::vector<int> frames;
    std::vector<double> truth;
    for (std::size_t i = 0; i < map.frames.size(); ++i) {
        const int f = map.frames[i];
        if (std::any_of(exclude.begin(), exclude.end(), [&](const FrameRange& r) { return r.contains(f); })) continue;
        auto it = angle.find(f);
        if (it == angle.end()) throw IntegrityError("no steering record for frame " + std::to_string(f));
        rows.push_back(static_cast<std::int64_t>(i));
        frames.push_back(f);
        truth.push_back(drive_to_steering_angle(it->second, steering_ratio));
    }
    const auto index = torch::tensor(rows, torch::kLong);

    std::vector<Condition> conditions;
    conditions.push_back({kClear, map.clear.index_select(0, index)});
    const auto rainy = map.rainy.index_select(0, index);
    conditions.push_back({kHeavyRain, rainy});
    if (light_rain_map) {
        if (light_rain_map->frames != map.frames)
            throw IntegrityError("light-rain map '" + light_rain_map->name + "' does not cover the same frames");
        conditions.push_back({kLightRain, light_rain_map->rainy.index_select(0, index)});
    }
    conditions.push_back({kDerained, derain(derainer, rainy)});
    return evaluate_conditions(pilot, frames, truth, conditions);
}

namespace {

const std::map<std::string, std::array<std::uint8_t, 3>> kColors = {
    {kClear, {31, 119, 180}}, {kHeavyRain, {214, 39, 40}}, {kLightRain, {255, 127, 14}}, {kDerained, {44, 160, 44}}};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::vector<fs::path> write_report(const SteeringReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<fs::path> files;

    {
        std::ofstream out(dir / "mae.csv");
        out << "condition,mae_deg,n_frames\n";
        for (const auto& c : report.conditions) out << c << ',' << fmt(report.mae.at(c)) << ',' << report.frames.size() << '\n';
        files.push_back(dir / "mae.csv");
    }
    {
        std::ofstream out(dir / "series.csv");
        out << "frame,truth_deg";
        for (const auto& c : report.conditions) out << ',' << c << "_pred_deg";
        for (const auto& c : report.conditions) out << ',' << c << "_error_deg";
        out << '\n';
        for (std::size_t i = 0; i < report.frames.size(); ++i) {
            out << report.frames[i] << ',' << fmt(report.truth[i]);
            for (const auto& c : report.conditions) out << ',' << fmt(report.predictions.at(c)[i]);
            for (const auto& c : report.conditions) out << ',' << fmt(report.truth[i] - report.predictions.at(c)[i]);
            out << '\n';
        }
        files.push_back(dir / "series.csv");
    }
    {
        std::ofstream out(dir / "regression.csv");
        out << "condition,slope,intercept,r_squared,degenerate\n";
        for (const auto& c : report.conditions) {
            const auto& r = report.regression_vs_clear.at(c);
            out << c << ',' << fmt(r.slope) << ',' << fmt(r.intercept) << ',' << fmt(r.r_squared) << ','
                << (r.degenerate() ? 1 : 0) << '\n';
        }
        files.push_back(dir / "regression.csv");
    }

    std::vector<double> xs(report.frames.begin(), report.frames.end());
    const auto has = [&](const char* c) {
        return std::find(report.conditions.begin(), report.conditions.end(), c) != report.conditions.end();
    };
    for (const char* rain : {kHeavyRain, kLightRain}) {
        if (!has(rain)) continue;
        plot::Figure fig;
        fig.title = std::string("Steering error vs ground truth (") + rain + ")";
        fig.x_label = "frame";
        fig.y_label = "truth - prediction (deg)";
        for (const char* c : {kClear, rain, kDerained})
            if (has(c)) fig.series.push_back({c, xs, report.errors(c), kColors.at(c), false});
        const fs::path p = dir / (std::string("errors_") + rain + ".png");
        plot::save(fig, p);
        files.push_back(p);
    }
    for (const auto& c : report.conditions) {
        if (c == kClear) continue;
        const auto& r = report.regression_vs_clear.at(c);
        plot::Figure fig;
        fig.title = "Clear vs " + c + " predictions";
        fig.x_label = c + " prediction (deg)";
        fig.y_label = "clear prediction (deg)";
        fig.series.push_back({c, report.predictions.at(c), report.predictions.at(kClear), kColors.at(c), true});
        if (!r.degenerate_x) {
            auto [lo, hi] = std::minmax_element(report.predictions.at(c).begin(), report.predictions.at(c).end());
            fig.series.push_back(
                {"fit", {*lo, *hi}, {r.slope * *lo + r.intercept, r.slope * *hi + r.intercept}, {0, 0, 0}, false});
        }
        fig.notes.push_back("R^2 = " + (r.degenerate() ? std::string("n/a") : fmt(r.r_squared).substr(0, 6)));
        const fs::path p = dir / ("scatter_" + c + ".png");
        plot::save(fig, p);
        files.push_back(p);
    }
    return files;
}

}  // namespace derain
