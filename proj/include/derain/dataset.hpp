#pragma once

// Paired clear/rainy frame datasets on disk and the steering logs that go with them.
//
// Layout:
//   <root>/<map>/clear/frame_000000.png
//   <root>/<map>/rainy/frame_000000.png
//   <root>/<map>/steering.csv      header: frame,drive_wheel_angle_deg
//
// Steering sign convention: positive drive-wheel angle is clockwise (a right turn).

#include <filesystem>
#include <string>
#include <vector>

#include "derain/image.hpp"

namespace derain {

struct FramePair {
    std::string map_name;
    int frame_index = 0;
    std::filesystem::path clear_path;
    std::filesystem::path rainy_path;
};

struct SteeringRecord {
    int frame_index = 0;
    double drive_wheel_angle_deg = 0.0;

    friend bool operator==(const SteeringRecord&, const SteeringRecord&) = default;
};

struct MapDataset {
    std::string map_name;
    std::vector<FramePair> pairs;          // strictly ascending frame_index
    std::vector<SteeringRecord> steering;  // ascending; empty when no log exists
    std::vector<std::string> warnings;     // unmatched files reported during load

    std::vector<int> frame_indices() const;
};

inline constexpr double kDefaultSteeringRatio = 15.0;

std::string frame_filename(int frame_index);
// Parses "frame_000123.png"; returns -1 for names that do not follow the pattern.
int parse_frame_filename(const std::string& name);

// Pairs clear/ and rainy/ frames by exact frame number. Files present in only one
// folder are excluded and listed in `warnings`. steering.csv is read when present.
MapDataset load_map_dataset(const std::filesystem::path& root, const std::string& map_name);

// Builds a dataset description for frames held in memory (no backing files).
MapDataset in_memory_dataset(const std::string& map_name, const std::vector<int>& frames);

// Centre-crop to the largest square (offset floor((W - S) / 2)), then bilinear-resize.
Image preprocess(const Image& image, int target_resolution);

// Steering-wheel angle = drive-wheel angle x ratio. Throws ConfigError for ratio <= 0.
double drive_to_steering_angle(double drive_wheel_deg, double ratio);

std::vector<SteeringRecord> load_steering(const std::filesystem::path& csv_path);
void write_steering(const std::filesystem::path& csv_path, const std::vector<SteeringRecord>& records);

// Maps listed as immediate subdirectories of root that contain clear/ and rainy/.
std::vector<std::string> list_maps(const std::filesystem::path& root);

}  // namespace derain
