#include "derain/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "derain/errors.hpp"
#include "derain/rng.hpp"

namespace fs = std::filesystem;

namespace derain::synth {

std::string to_string(Palette p) {
    switch (p) {
        case Palette::urban: return "urban";
        case Palette::rural: return "rural";
        case Palette::highway: return "highway";
    }
    return "urban";
}

Palette palette_from_string(const std::string& name) {
    if (name == "urban") return Palette::urban;
    if (name == "rural") return Palette::rural;
    if (name == "highway") return Palette::highway;
    throw ConfigError("unknown palette '" + name + "'");
}

void SceneSpec::validate() const {
    if (map_name.empty()) throw ConfigError("scene needs a map name");
    if (n_frames < 1) throw ConfigError("n_frames must be positive");
    if (resolution < 8) throw ConfigError("resolution must be at least 8 px");
    auto segs = curvature_profile;
    std::sort(segs.begin(), segs.end(), [](auto& a, auto& b) { return a.start_frame < b.start_frame; });
    int prev_end = 0;
    for (const auto& s : segs) {
        if (s.start_frame < 0 || s.end_frame > n_frames || s.start_frame >= s.end_frame)
            throw ConfigError("curvature segment [" + std::to_string(s.start_frame) + "," +
                              std::to_string(s.end_frame) + ") outside [0, n_frames)");
        if (s.start_frame < prev_end) throw ConfigError("curvature segments overlap");
        if (!std::isfinite(s.curvature)) throw ConfigError("curvature must be finite");
        prev_end = s.end_frame;
    }
}

double SceneSpec::curvature_at(int frame) const {
    for (const auto& s : curvature_profile)
        if (frame >= s.start_frame && frame < s.end_frame) return s.curvature;
    return 0.0;
}

void RainSpec::validate() const {
    const auto ordered = [](const Range<double>& r) { return r.min <= r.max; };
    if (streaks_per_frame < 0) throw ConfigError("streaks_per_frame must be non-negative");
    if (!ordered(length_px) || !ordered(thickness_px) || !ordered(intensity))
        throw ConfigError("rain ranges need min <= max");
    if (length_px.min < 0 || thickness_px.min < 0) throw ConfigError("streak geometry must be non-negative");
    if (intensity.min < 0 || intensity.max > 1) throw ConfigError("streak intensity must lie in [0,1]");
    if (global_desaturation < 0 || global_desaturation > 1 || global_darkening < 0 || global_darkening > 1)
        throw ConfigError("desaturation and darkening must lie in [0,1]");
}

RainSpec RainSpec::heavy(int resolution, std::uint64_t seed) {
    const double s = resolution / 256.0;
    RainSpec r;
    r.streaks_per_frame = std::max(1, static_cast<int>(std::lround(900 * s)));
    r.length_px = {std::max(3.0, 12 * s), std::max(4.0, 30 * s)};
    r.thickness_px = {1.0, 1.6};
    r.angle_mean_deg = 8.0;
    r.angle_jitter_deg = 5.0;
    r.intensity = {0.30, 0.60};
    r.global_desaturation = 0.6;
    r.global_darkening = 0.3;
    r.seed = seed;
    return r;
}

RainSpec RainSpec::light(int resolution, std::uint64_t seed) {
    const double s = resolution / 256.0;
    RainSpec r;
    r.streaks_per_frame = std::max(1, static_cast<int>(std::lround(180 * s)));
    r.length_px = {std::max(2.0, 8 * s), std::max(3.0, 20 * s)};
    r.thickness_px = {1.0, 1.2};
    r.angle_mean_deg = 6.0;
    r.angle_jitter_deg = 4.0;
    r.intensity = {0.25, 0.45};
    r.global_desaturation = 0.25;
    r.global_darkening = 0.1;
    r.seed = seed;
    return r;
}

double lateral_drift_px(const SceneSpec& spec, int t) {
    double drift = 0.0;
    for (int s = 0; s < t; ++s) drift += kDriftPxPerCurvatureStep * spec.curvature_at(s) / 0.01;
    return drift;
}

namespace {

using Rgb = std::array<float, 3>;

struct Colors {
    Rgb sky_top, sky_horizon, ground, asphalt, marking;
    std::vector<Rgb> objects;
};

Colors colors_for(Palette p) {
    switch (p) {
        case Palette::urban:
            return {{0.36f, 0.55f, 0.85f}, {0.78f, 0.85f, 0.93f}, {0.55f, 0.53f, 0.50f},
                    {0.24f, 0.24f, 0.26f}, {0.96f, 0.96f, 0.92f},
                    {{0.62f, 0.56f, 0.50f}, {0.45f, 0.47f, 0.56f}, {0.72f, 0.66f, 0.55f}, {0.36f, 0.34f, 0.37f}}};
        case Palette::rural:
            return {{0.40f, 0.60f, 0.90f}, {0.85f, 0.90f, 0.95f}, {0.32f, 0.55f, 0.22f},
                    {0.33f, 0.32f, 0.30f}, {0.95f, 0.90f, 0.60f},
                    {{0.15f, 0.36f, 0.12f}, {0.22f, 0.42f, 0.16f}, {0.60f, 0.22f, 0.16f}}};
        case Palette::highway:
            return {{0.30f, 0.50f, 0.85f}, {0.80f, 0.87f, 0.95f}, {0.58f, 0.60f, 0.40f},
                    {0.21f, 0.21f, 0.23f}, {0.97f, 0.97f, 0.97f},
                    {{0.36f, 0.46f, 0.31f}, {0.47f, 0.52f, 0.42f}, {0.52f, 0.56f, 0.66f}}};
    }
    return colors_for(Palette::urban);
}

enum class Shape { box, crown, hill };

struct Backdrop {
    double x = 0;  // panorama column of the left edge
    double width = 0;
    double height = 0;
    Shape shape = Shape::box;
    Rgb color{};
};

struct Geometry {
    double size = 0;
    double horizon = 0;
    double panorama = 0;

    explicit Geometry(int resolution)
        : size(resolution), horizon(0.42 * resolution), panorama(3.0 * resolution) {}

    // Normalised distance below the horizon: 0 at the horizon, 1 at the bottom edge.
    double depth_u(double py) const { return (py - horizon) / (size - horizon); }
};

std::vector<Backdrop> make_backdrop(const SceneSpec& spec, const Geometry& g, const Colors& colors) {
    Rng rng(derive_seed(spec.seed, 0xB4C4D));
    std::vector<Backdrop> items;
    const double r = g.size;
    const auto jitter = [&](Rgb c) {
        const float d = static_cast<float>(rng.uniform(-0.05, 0.05));
        for (auto& v : c) v = std::clamp(v + d, 0.0f, 1.0f);
        return c;
    };
    const auto pick = [&]() { return jitter(colors.objects[rng.below(colors.objects.size())]); };

    int count = 0;
    switch (spec.palette) {
        case Palette::urban: count = 16; break;
        case Palette::rural: count = 12; break;
        case Palette::highway: count = 7; break;
    }
    for (int i = 0; i < count; ++i) {
        Backdrop b;
        b.x = rng.uniform(0.0, g.panorama);
        switch (spec.palette) {
            case Palette::urban:
                b.shape = Shape::box;
                b.width = rng.uniform(0.06, 0.22) * r;
                b.height = rng.uniform(0.08, 0.34) * r;
                break;
            case Palette::rural:
                b.shape = (i % 4 == 3) ? Shape::box : Shape::crown;
                b.width = rng.uniform(0.05, 0.14) * r;
                b.height = rng.uniform(0.06, 0.16) * r;
                break;
            case Palette::highway:
                b.shape = Shape::hill;
                b.width = rng.uniform(0.4, 0.9) * r;
                b.height = rng.uniform(0.05, 0.14) * r;
                break;
        }
        b.color = pick();
        items.push_back(b);
    }
    return items;
}

// Height of a backdrop silhouette above the horizon at panorama offset `dx` from its left edge.
double silhouette(const Backdrop& b, double dx) {
    if (dx < 0 || dx >= b.width) return -1.0;
    switch (b.shape) {
        case Shape::box: return b.height;
        case Shape::crown: {
            const double t = (dx / b.width) * 2.0 - 1.0;
            return b.height * std::sqrt(std::max(0.0, 1.0 - t * t));
        }
        case Shape::hill: {
            const double c = std::sin(std::numbers::pi * dx / b.width);
            return b.height * c * c;
        }
    }
    return -1.0;
}

double positive_mod(double a, double m) {
    const double r = std::fmod(a, m);
    return r < 0 ? r + m : r;
}

struct RoadRow {
    double center;
    double half_width;
    double line_half_width;
    double world_z;  // 1 at the bottom edge, growing toward the horizon
};

RoadRow road_row(const SceneSpec& spec, const Geometry& g, double py, int t) {
    const double u = g.depth_u(py);
    const double curvature = spec.curvature_at(t);
    const double bend = (curvature / 0.03) * 0.35 * g.size * (1.0 - u) * (1.0 - u);
    return {g.size / 2.0 + bend, 0.42 * g.size * u, std::max(0.012 * g.size * u, 0.3), 1.0 / u};
}

// Forward motion expressed in world_z units: one pixel per frame at the bottom edge.
double scroll(const Geometry& g, int t) { return t * kScrollPxPerFrame / (g.size - g.horizon); }

bool dash_on(const RoadRow& row, const Geometry& g, int t) {
    constexpr double period = 0.5;
    const double phase = (row.world_z + scroll(g, t)) / period;
    return phase - std::floor(phase) < 0.5;
}

enum class Marking { none, edge, dash };

Marking marking_at(const RoadRow& row, const Geometry& g, double px, double py, int t) {
    if (py <= g.horizon || g.depth_u(py) < 0.06) return Marking::none;
    const double dx = px - row.center;
    const double edge = 0.88 * row.half_width;
    if (std::abs(std::abs(dx) - edge) < row.line_half_width) return Marking::edge;
    if (std::abs(dx) < 0.8 * row.line_half_width && dash_on(row, g, t)) return Marking::dash;
    return Marking::none;
}

void check_frame(const SceneSpec& spec, int t) {
    if (t < 0 || t >= spec.n_frames)
        throw IndexError("frame " + std::to_string(t) + " outside [0, " + std::to_string(spec.n_frames) + ")");
}

}  // namespace

Image render_clear_frame(const SceneSpec& spec, int t) {
    check_frame(spec, t);
    const Geometry g(spec.resolution);
    const Colors colors = colors_for(spec.palette);
    const auto backdrop = make_backdrop(spec, g, colors);
    const double drift = lateral_drift_px(spec, t);
    const int n = spec.resolution;

    Image img(n, n);
    const auto put = [&](int y, int x, const Rgb& c, float shade = 1.0f) {
        for (int k = 0; k < 3; ++k) img.at(y, x, k) = std::clamp(c[k] * shade, 0.0f, 1.0f);
    };

    for (int y = 0; y < n; ++y) {
        const double py = y + 0.5;
        if (py <= g.horizon) {
            const float a = static_cast<float>(py / g.horizon);
            Rgb sky;
            for (int k = 0; k < 3; ++k) sky[k] = colors.sky_top[k] * (1 - a) + colors.sky_horizon[k] * a;
            const double rise = g.horizon - py;
            for (int x = 0; x < n; ++x) {
                const double q = positive_mod(x + 0.5 + drift, g.panorama);
                const Rgb* hit = nullptr;
                for (const auto& b : backdrop) {
                    double dx = q - b.x;
                    if (dx < 0) dx += g.panorama;
                    if (silhouette(b, dx) >= rise) hit = &b.color;
                }
                put(y, x, hit ? *hit : sky);
            }
            continue;
        }

        const RoadRow row = road_row(spec, g, py, t);
        const double u = g.depth_u(py);
        const float haze = static_cast<float>(0.88 + 0.12 * u);
        const float band =
            static_cast<float>(1.0 + 0.05 * std::sin(2.0 * std::numbers::pi * (row.world_z + scroll(g, t)) / 1.5));
        for (int x = 0; x < n; ++x) {
            const double px = x + 0.5;
            switch (marking_at(row, g, px, py, t)) {
                case Marking::edge:
                case Marking::dash: put(y, x, colors.marking, haze); continue;
                case Marking::none: break;
            }
            if (std::abs(px - row.center) < row.half_width)
                put(y, x, colors.asphalt, haze);
            else
                put(y, x, colors.ground, haze * band);
        }
    }
    return img;
}

std::vector<std::uint8_t> lane_marking_mask(const SceneSpec& spec, int t) {
    check_frame(spec, t);
    const Geometry g(spec.resolution);
    const int n = spec.resolution;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
    for (int y = 0; y < n; ++y) {
        const double py = y + 0.5;
        if (py <= g.horizon) continue;
        const RoadRow row = road_row(spec, g, py, t);
        for (int x = 0; x < n; ++x)
            if (marking_at(row, g, x + 0.5, py, t) != Marking::none) mask[static_cast<std::size_t>(y) * n + x] = 1;
    }
    return mask;
}

std::vector<float> streak_layer(const RainSpec& spec, int height, int width, int t) {
    std::vector<float> layer(static_cast<std::size_t>(height) * width, 0.0f);
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(t)));
    constexpr double deg = std::numbers::pi / 180.0;
    for (int i = 0; i < spec.streaks_per_frame; ++i) {
        const double length = rng.uniform(spec.length_px.min, spec.length_px.max);
        const double thickness = rng.uniform(spec.thickness_px.min, spec.thickness_px.max);
        const double angle = (spec.angle_mean_deg + spec.angle_jitter_deg * rng.uniform(-1.0, 1.0)) * deg;
        const double intensity = rng.uniform(spec.intensity.min, spec.intensity.max);
        const double cx = rng.uniform(-length / 2, width + length / 2);
        const double cy = rng.uniform(-length / 2, height + length / 2);

        // Segment from a to b, measured from vertical.
        const double dx = std::sin(angle) * length / 2, dy = std::cos(angle) * length / 2;
        const double ax = cx - dx, ay = cy - dy, bx = cx + dx, by = cy + dy;
        const double reach = thickness / 2 + 1.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - reach)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - reach)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(ay, by) + reach)));
        const double vx = bx - ax, vy = by - ay;
        const double len2 = std::max(vx * vx + vy * vy, 1e-12);

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5 - ax, py = y + 0.5 - ay;
                const double s = std::clamp((px * vx + py * vy) / len2, 0.0, 1.0);
                const double ex = px - s * vx, ey = py - s * vy;
                const double coverage = std::clamp(thickness / 2 + 0.5 - std::sqrt(ex * ex + ey * ey), 0.0, 1.0);
                if (coverage <= 0) continue;
                auto& v = layer[static_cast<std::size_t>(y) * width + x];
                v = std::max(v, static_cast<float>(intensity * coverage));
            }
        }
    }
    return layer;
}

namespace {

float luminance(const Image& im, int y, int x) {
    return 0.299f * im.at(y, x, 0) + 0.587f * im.at(y, x, 1) + 0.114f * im.at(y, x, 2);
}

}  // namespace

Image apply_weather_style(const Image& clear, const RainSpec& spec) {
    Image out = clear;
    if (spec.global_desaturation == 0.0 && spec.global_darkening == 0.0) return out;
    const float d = static_cast<float>(spec.global_desaturation);
    const float keep = static_cast<float>(1.0 - spec.global_darkening);
    for (int y = 0; y < clear.height; ++y)
        for (int x = 0; x < clear.width; ++x) {
            const float g = luminance(clear, y, x);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = ((1 - d) * clear.at(y, x, c) + d * g) * keep;
        }
    return out;
}

Image invert_weather_style(const Image& styled, const RainSpec& spec) {
    if (spec.global_desaturation >= 1.0 || spec.global_darkening >= 1.0)
        throw ConfigError("full desaturation or darkening cannot be inverted");
    Image out = styled;
    const double d = spec.global_desaturation;
    const double keep = 1.0 - spec.global_darkening;
    for (int y = 0; y < styled.height; ++y)
        for (int x = 0; x < styled.width; ++x) {
            // Desaturation toward luminance leaves luminance unchanged, so it can be read back.
            const double g = luminance(styled, y, x) / keep;
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = static_cast<float>((styled.at(y, x, c) / keep - d * g) / (1 - d));
        }
    return out;
}

Image overlay_rain(const Image& clear, const RainSpec& spec, int t) {
    Image out = apply_weather_style(clear, spec);
    if (spec.streaks_per_frame == 0) return out;
    const auto layer = streak_layer(spec, clear.height, clear.width, t);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const float a = layer[static_cast<std::size_t>(y) * out.width + x];
            if (a <= 0) continue;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::min(1.0f, out.at(y, x, c) + a);
        }
    return out;
}

double drive_angle_deg(double curvature) {
    return std::atan(kWheelbaseM * curvature) * 180.0 / std::numbers::pi;
}

SyntheticMap synthesize_map(const SceneSpec& scene, const RainSpec& rain) {
    scene.validate();
    rain.validate();
    SyntheticMap map{scene, rain, {}, {}, {}};
    map.clear.reserve(scene.n_frames);
    map.rainy.reserve(scene.n_frames);
    for (int t = 0; t < scene.n_frames; ++t) {
        map.clear.push_back(render_clear_frame(scene, t));
        map.rainy.push_back(overlay_rain(map.clear.back(), rain, t));
        map.steering.push_back({t, drive_angle_deg(scene.curvature_at(t))});
    }
    return map;
}

TemporalContrast temporal_contrast(const SyntheticMap& map) {
    TemporalContrast tc;
    const int n = static_cast<int>(map.clear.size());
    if (n < 2) return tc;
    const int h = map.clear.front().height, w = map.clear.front().width;
    auto prev = streak_layer(map.rain_spec, h, w, 0);
    for (int t = 1; t < n; ++t) {
        tc.mean_clear_diff += mean_abs_diff(map.clear[t - 1], map.clear[t]);
        auto cur = streak_layer(map.rain_spec, h, w, t);
        double d = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) d += std::abs(double(cur[i]) - prev[i]);
        tc.mean_rain_diff += d / static_cast<double>(cur.size());
        prev = std::move(cur);
    }
    tc.mean_clear_diff /= (n - 1);
    tc.mean_rain_diff /= (n - 1);
    return tc;
}

std::vector<CurvatureSegment> random_curvature_profile(int n_frames, std::uint64_t seed, double max_curvature) {
    Rng rng(derive_seed(seed, 0x5EC7));
    std::vector<CurvatureSegment> segs;
    int t = static_cast<int>(rng.uniform(10, 30));
    while (t < n_frames) {
        const int len = static_cast<int>(rng.uniform(20, 50));
        const double magnitude = rng.uniform(0.25, 1.0) * max_curvature;
        const double sign = rng.below(2) == 0 ? -1.0 : 1.0;
        segs.push_back({t, std::min(n_frames, t + len), sign * magnitude});
        t += len + static_cast<int>(rng.uniform(10, 35));
    }
    return segs;
}

nlohmann::json to_json(const SceneSpec& spec) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : spec.curvature_profile) segs.push_back({s.start_frame, s.end_frame, s.curvature});
    return {{"map_name", spec.map_name},     {"n_frames", spec.n_frames},
            {"seed", spec.seed},             {"resolution", spec.resolution},
            {"curvature_profile", segs},     {"palette", to_string(spec.palette)}};
}

nlohmann::json to_json(const RainSpec& r) {
    return {{"streaks_per_frame", r.streaks_per_frame},
            {"length_px", {r.length_px.min, r.length_px.max}},
            {"thickness_px", {r.thickness_px.min, r.thickness_px.max}},
            {"angle_deg", {r.angle_mean_deg, r.angle_jitter_deg}},
            {"intensity", {r.intensity.min, r.intensity.max}},
            {"global_desaturation", r.global_desaturation},
            {"global_darkening", r.global_darkening},
            {"seed", r.seed}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec s;
    s.map_name = j.at("map_name").get<std::string>();
    s.n_frames = j.at("n_frames").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.resolution = j.at("resolution").get<int>();
    s.palette = palette_from_string(j.value("palette", std::string("urban")));
    for (const auto& seg : j.value("curvature_profile", nlohmann::json::array()))
        s.curvature_profile.push_back({seg.at(0).get<int>(), seg.at(1).get<int>(), seg.at(2).get<double>()});
    return s;
}

RainSpec rain_from_json(const nlohmann::json& j) {
    const auto range = [&](const char* key, Range<double> fallback) {
        if (!j.contains(key)) return fallback;
        return Range<double>{j[key].at(0).get<double>(), j[key].at(1).get<double>()};
    };
    RainSpec r;
    r.streaks_per_frame = j.at("streaks_per_frame").get<int>();
    r.length_px = range("length_px", r.length_px);
    r.thickness_px = range("thickness_px", r.thickness_px);
    const auto angle = range("angle_deg", {r.angle_mean_deg, r.angle_jitter_deg});
    r.angle_mean_deg = angle.min;
    r.angle_jitter_deg = angle.max;
    r.intensity = range("intensity", r.intensity);
    r.global_desaturation = j.value("global_desaturation", 0.0);
    r.global_darkening = j.value("global_darkening", 0.0);
    r.seed = j.value("seed", std::uint64_t{0});
    return r;
}

void write_map(const SyntheticMap& map, const fs::path& root) {
    const fs::path dir = root / map.scene_spec.map_name;
    fs::create_directories(dir / "clear");
    fs::create_directories(dir / "rainy");
    for (std::size_t t = 0; t < map.clear.size(); ++t) {
        const std::string name = frame_filename(static_cast<int>(t));
        write_png(dir / "clear" / name, map.clear[t]);
        write_png(dir / "rainy" / name, map.rainy[t]);
    }
    write_steering(dir / "steering.csv", map.steering);
    std::ofstream(dir / "scene.json") << nlohmann::json{{"scene", to_json(map.scene_spec)},
                                                       {"rain", to_json(map.rain_spec)}}
                                             .dump(2)
                                      << "\n";
}

}  // namespace derain::synth
