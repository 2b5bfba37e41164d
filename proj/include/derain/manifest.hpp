#pragma once

// Run manifests: enough recorded state to replay any command.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace derain {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kDeterministicEnv = "DERAIN_DETERMINISTIC";

struct RunManifest {
    std::string command;
    nlohmann::json config;  // fully resolved; feeding it back reproduces the run
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, std::uint64_t> seeds;
    int format_version = kManifestFormatVersion;
    bool deterministic = false;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

// Applies DERAIN_DETERMINISTIC=1 (single thread, deterministic kernels). Returns whether it is on.
bool configure_runtime();
bool deterministic_mode();

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace derain
