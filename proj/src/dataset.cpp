#include "derain/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "derain/errors.hpp"

namespace fs = std::filesystem;

namespace derain {

std::vector<int> MapDataset::frame_indices() const {
    std::vector<int> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.frame_index);
    return out;
}

std::string frame_filename(int frame_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06d.png", frame_index);
    return buf;
}

int parse_frame_filename(const std::string& name) {
    constexpr std::string_view prefix = "frame_";
    constexpr std::string_view suffix = ".png";
    if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) || !name.ends_with(suffix))
        return -1;
    const std::string_view digits(name.data() + prefix.size(), name.size() - prefix.size() - suffix.size());
    if (digits.size() < 6) return -1;
    int value = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || value < 0) return -1;
    return value;
}

namespace {

std::map<int, fs::path> scan_frames(const fs::path& dir) {
    std::map<int, fs::path> frames;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const int idx = parse_frame_filename(entry.path().filename().string());
        if (idx < 0) continue;
        // frame_000001.png and frame_0000001.png both name frame 1.
        if (!frames.emplace(idx, entry.path()).second)
            throw IntegrityError("duplicate frame number " + std::to_string(idx) + " in " + dir.string());
    }
    return frames;
}

}  // namespace

MapDataset load_map_dataset(const fs::path& root, const std::string& map_name) {
    const fs::path map_dir = root / map_name;
    const fs::path clear_dir = map_dir / "clear";
    const fs::path rainy_dir = map_dir / "rainy";
    if (!fs::is_directory(clear_dir) || !fs::is_directory(rainy_dir))
        throw ConfigError("map '" + map_name + "' needs clear/ and rainy/ under " + map_dir.string());

    const auto clear = scan_frames(clear_dir);
    const auto rainy = scan_frames(rainy_dir);

    MapDataset ds;
    ds.map_name = map_name;
    for (const auto& [idx, path] : clear) {
        auto it = rainy.find(idx);
        if (it == rainy.end()) {
            ds.warnings.push_back("frame " + std::to_string(idx) + " has no rainy counterpart");
            continue;
        }
        ds.pairs.push_back({map_name, idx, path, it->second});
    }
    for (const auto& [idx, path] : rainy)
        if (!clear.contains(idx)) ds.warnings.push_back("frame " + std::to_string(idx) + " has no clear counterpart");

    if (ds.pairs.empty()) throw EmptyDatasetError("map '" + map_name + "' has no matched clear/rainy frames");

    const fs::path steering = map_dir / "steering.csv";
    if (fs::exists(steering)) {
        ds.steering = load_steering(steering);
        std::set<int> have;
        for (const auto& r : ds.steering) have.insert(r.frame_index);
        for (const auto& p : ds.pairs)
            if (!have.contains(p.frame_index))
                throw IntegrityError("steering.csv of map '" + map_name + "' lacks frame " +
                                     std::to_string(p.frame_index));
    }
    return ds;
}

MapDataset in_memory_dataset(const std::string& map_name, const std::vector<int>& frames) {
    MapDataset ds;
    ds.map_name = map_name;
    for (int f : frames) {
        if (!ds.pairs.empty() && f <= ds.pairs.back().frame_index)
            throw IntegrityError("frame indices must be strictly ascending");
        ds.pairs.push_back({map_name, f, {}, {}});
    }
    return ds;
}

Image preprocess(const Image& image, int target_resolution) {
    if (image.height < 1 || image.width < 1) throw ShapeError("preprocess: empty image");
    if (target_resolution < 1) throw ConfigError("preprocess: target resolution must be positive");
    const int side = std::min(image.height, image.width);
    const Image square = (image.height == image.width)
                             ? image
                             : crop(image, (image.height - side) / 2, (image.width - side) / 2, side, side);
    return resize_bilinear(square, target_resolution, target_resolution);
}

double drive_to_steering_angle(double drive_wheel_deg, double ratio) {
    if (!(ratio > 0.0)) throw ConfigError("steering ratio must be positive");
    return drive_wheel_deg * ratio;
}

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace

std::vector<SteeringRecord> load_steering(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ConfigError("cannot open " + csv_path.string());
    const std::string file = csv_path.string();

    std::string line;
    if (!std::getline(in, line) || trim(line) != "frame,drive_wheel_angle_deg")
        throw ParseError(file, 1, "expected header 'frame,drive_wheel_angle_deg'");

    std::vector<SteeringRecord> records;
    std::set<int> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError(file, line_no, "expected two columns");
        const std::string a = trim(line.substr(0, comma));
        const std::string b = trim(line.substr(comma + 1));

        SteeringRecord r;
        auto [pa, ea] = std::from_chars(a.data(), a.data() + a.size(), r.frame_index);
        if (ea != std::errc{} || pa != a.data() + a.size() || r.frame_index < 0)
            throw ParseError(file, line_no, "bad frame index '" + a + "'");
        // std::from_chars for double is incomplete in some toolchains; strtod with an end check.
        char* end = nullptr;
        r.drive_wheel_angle_deg = std::strtod(b.c_str(), &end);
        if (b.empty() || end != b.c_str() + b.size() || !std::isfinite(r.drive_wheel_angle_deg))
            throw ParseError(file, line_no, "bad angle '" + b + "'");
        if (!seen.insert(r.frame_index).second)
            throw IntegrityError(file + ":" + std::to_string(line_no) + ": duplicate frame " +
                                 std::to_string(r.frame_index));
        records.push_back(r);
    }
    std::sort(records.begin(), records.end(),
              [](const auto& x, const auto& y) { return x.frame_index < y.frame_index; });
    return records;
}

void write_steering(const fs::path& csv_path, const std::vector<SteeringRecord>& records) {
    std::ofstream out(csv_path);
    if (!out) throw Error("cannot write " + csv_path.string());
    out << "frame,drive_wheel_angle_deg\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%.17g\n", r.frame_index, r.drive_wheel_angle_deg);
        out << buf;
    }
}

std::vector<std::string> list_maps(const fs::path& root) {
    std::vector<std::string> maps;
    if (!fs::is_directory(root)) throw ConfigError("not a directory: " + root.string());
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::is_directory(entry.path() / "clear") && fs::is_directory(entry.path() / "rainy"))
            maps.push_back(entry.path().filename().string());
    std::sort(maps.begin(), maps.end());
    return maps;
}

}  // namespace derain
