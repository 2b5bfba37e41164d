#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "derain/frame_store.hpp"
#include "derain/synth.hpp"

namespace testing {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("derain_test_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    fs::path path_;
};

inline derain::synth::SceneSpec scene(const std::string& name, int n_frames, int resolution, std::uint64_t seed,
                                      double curvature = 0.0) {
    derain::synth::SceneSpec s;
    s.map_name = name;
    s.n_frames = n_frames;
    s.seed = seed;
    s.resolution = resolution;
    if (curvature != 0.0) s.curvature_profile = {{0, n_frames, curvature}};
    return s;
}

// Synthetic maps rendered in memory and loaded into a store at `resolution`.
inline derain::FrameStore synthetic_store(int resolution, const std::vector<std::pair<std::string, int>>& maps,
                                          std::uint64_t seed = 1) {
    derain::FrameStore store(resolution);
    std::uint64_t k = 0;
    for (const auto& [name, n] : maps) {
        auto spec = scene(name, n, resolution, seed * 131 + k);
        spec.curvature_profile = derain::synth::random_curvature_profile(n, seed + k);
        spec.palette = static_cast<derain::synth::Palette>(k % 3);
        const auto map = derain::synth::synthesize_map(spec, derain::synth::RainSpec::heavy(resolution, seed * 7 + k));
        std::vector<int> frames(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) frames[static_cast<std::size_t>(i)] = i;
        store.add(name, frames, map.clear, map.rainy, map.steering);
        ++k;
    }
    return store;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative paths and contents of every regular file below root.
inline std::vector<std::pair<std::string, std::string>> snapshot_tree(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), read_file(e.path()));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace testing
