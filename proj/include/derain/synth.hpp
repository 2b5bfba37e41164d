#pragma once

// Procedural paired clear/rainy driving sequences with per-frame steering truth.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "derain/dataset.hpp"
#include "derain/image.hpp"

namespace derain::synth {

enum class Palette { urban, rural, highway };

std::string to_string(Palette p);
Palette palette_from_string(const std::string& name);

// Constant curvature over frames [start_frame, end_frame).
struct CurvatureSegment {
    int start_frame = 0;
    int end_frame = 0;
    double curvature = 0.0;  // 1/m, positive turns right
};

struct SceneSpec {
    std::string map_name;
    int n_frames = 200;
    std::uint64_t seed = 0;
    int resolution = 256;
    std::vector<CurvatureSegment> curvature_profile;
    Palette palette = Palette::urban;

    // Throws ConfigError on overlapping or out-of-range segments.
    void validate() const;
    double curvature_at(int frame) const;
};

template <class T>
struct Range {
    T min{};
    T max{};
};

struct RainSpec {
    int streaks_per_frame = 0;
    Range<double> length_px{8.0, 24.0};
    Range<double> thickness_px{1.0, 1.0};
    double angle_mean_deg = 0.0;   // from vertical
    double angle_jitter_deg = 0.0;
    Range<double> intensity{0.2, 0.4};
    double global_desaturation = 0.0;
    double global_darkening = 0.0;
    std::uint64_t seed = 0;

    void validate() const;

    // Presets scale streak geometry with image size; the numbers are tuning knobs.
    static RainSpec heavy(int resolution, std::uint64_t seed);
    static RainSpec light(int resolution, std::uint64_t seed);
};

struct SyntheticMap {
    SceneSpec scene_spec;
    RainSpec rain_spec;
    std::vector<Image> clear;
    std::vector<Image> rainy;
    std::vector<SteeringRecord> steering;
};

// Fixed rendering / kinematic constants.
inline constexpr double kWheelbaseM = 2.5;
inline constexpr double kDriftPxPerCurvatureStep = 2.0;  // px per frame per 0.01 /m
inline constexpr double kScrollPxPerFrame = 1.0;

// Lateral panorama offset after `t` frames: integrated curvature in pixels.
double lateral_drift_px(const SceneSpec& spec, int t);

Image render_clear_frame(const SceneSpec& spec, int t);

// 1 where a lane marking (edge line or centre dash) covers the pixel centre.
std::vector<std::uint8_t> lane_marking_mask(const SceneSpec& spec, int t);

// Per-pixel streak brightness (intensity x coverage) for frame t, row-major H x W.
std::vector<float> streak_layer(const RainSpec& spec, int height, int width, int t);

// Desaturate toward luminance, then darken. Rain streaks are not applied.
Image apply_weather_style(const Image& clear, const RainSpec& spec);
// Inverse of apply_weather_style; requires desaturation < 1 and darkening < 1.
Image invert_weather_style(const Image& styled, const RainSpec& spec);

Image overlay_rain(const Image& clear, const RainSpec& spec, int t);

// Drive-wheel angle in degrees for a path of the given curvature (bicycle model).
double drive_angle_deg(double curvature);

SyntheticMap synthesize_map(const SceneSpec& scene, const RainSpec& rain);

// Adjacent-frame contrast figures: scene change vs rain change.
struct TemporalContrast {
    double mean_clear_diff = 0.0;
    double mean_rain_diff = 0.0;
};
TemporalContrast temporal_contrast(const SyntheticMap& map);

// Random alternating straight / curved profile, deterministic in seed.
std::vector<CurvatureSegment> random_curvature_profile(int n_frames, std::uint64_t seed,
                                                        double max_curvature = 0.03);

// Writes <root>/<map_name>/{clear,rainy}/frame_%06d.png, steering.csv and scene.json.
void write_map(const SyntheticMap& map, const std::filesystem::path& root);

nlohmann::json to_json(const SceneSpec& spec);
nlohmann::json to_json(const RainSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& j);
RainSpec rain_from_json(const nlohmann::json& j);

}  // namespace derain::synth
