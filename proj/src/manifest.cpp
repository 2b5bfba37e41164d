#include "derain/manifest.hpp"

#include <cstdlib>
#include <fstream>

#include <torch/torch.h>

#include "derain/errors.hpp"

namespace fs = std::filesystem;

namespace derain {

nlohmann::json to_json(const RunManifest& m) {
    return {{"command", m.command},   {"config", m.config},
            {"inputs", m.inputs},     {"outputs", m.outputs},
            {"seeds", m.seeds},       {"format_version", m.format_version},
            {"deterministic", m.deterministic}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.inputs = j.value("inputs", std::vector<std::string>{});
        m.outputs = j.value("outputs", std::vector<std::string>{});
        m.seeds = j.value("seeds", std::map<std::string, std::uint64_t>{});
        m.format_version = j.value("format_version", 0);
        m.deterministic = j.value("deterministic", false);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    if (m.format_version != kManifestFormatVersion)
        throw ConfigError("unsupported manifest format version " + std::to_string(m.format_version));
    return m;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_manifest(const fs::path& dir, const RunManifest& m) { write_json(dir / kManifestFile, to_json(m)); }

RunManifest read_manifest(const fs::path& path) {
    return manifest_from_json(read_json(fs::is_directory(path) ? path / kManifestFile : path));
}

bool deterministic_mode() {
    const char* v = std::getenv(kDeterministicEnv);
    return v && std::string(v) == "1";
}

bool configure_runtime() {
    if (!deterministic_mode()) return false;
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
    return true;
}

}  // namespace derain
