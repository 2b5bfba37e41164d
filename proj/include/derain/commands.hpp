#pragma once

// Experiment commands behind the CLI. Each config round-trips through JSON so a
// run can be replayed from its manifest alone.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "derain/pilotnet.hpp"
#include "derain/steering.hpp"
#include "derain/synth.hpp"
#include "derain/training.hpp"

namespace derain {

inline constexpr const char* kSplitsFile = "splits.json";
inline constexpr const char* kLightRainDir = "light_rain";

struct DataSplits {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

// splits.json under root; without one every map counts as training data.
DataSplits read_splits(const std::filesystem::path& root);

// ---- synth ----

struct SynthMapEntry {
    std::string name;
    std::string split;  // train | validation | test
    synth::Palette palette = synth::Palette::urban;
};

struct SynthConfig {
    std::vector<SynthMapEntry> maps;  // default: five train towns, one validation, one test
    int resolution = 64;
    int n_frames = 200;
    std::uint64_t seed = 0;
    double max_curvature = 0.03;
    std::string rain_preset = "heavy";  // heavy | light
    // Also render test maps under light rain, written to <out>/light_rain/<map>.
    bool light_variant = true;
    std::string out;
    bool force = false;
};

SynthConfig default_synth_config();
nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct MapSeeds {
    std::uint64_t scene;
    std::uint64_t rain;
    std::uint64_t light_rain;
    std::uint64_t curvature;
};
// Disjoint per-map seeds derived from the config seed and the map's position.
MapSeeds map_seeds(std::uint64_t seed, std::size_t map_position);

// Specs for one configured map, exactly as run_synth renders it.
synth::SceneSpec scene_for(const SynthConfig& c, std::size_t map_position);
synth::RainSpec rain_for(const SynthConfig& c, std::size_t map_position, bool light = false);

// Refuses a non-empty output directory unless force is set.
void run_synth(const SynthConfig& c);

// ---- train ----

struct TrainCommandConfig {
    TrainConfig train;
    std::string data;
    std::string out;
    std::vector<std::string> train_maps;  // empty: take them from splits.json
    std::vector<std::string> validation_maps;
    std::vector<std::string> test_maps;
};

nlohmann::json to_json(const TrainCommandConfig& c);
TrainCommandConfig train_command_from_json(const nlohmann::json& j);
// Fills empty map lists from the dataset's splits.json.
void resolve_maps(TrainCommandConfig& c);

TrainResult run_train(TrainCommandConfig c);

// ---- eval ----

struct EvalConfig {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::vector<std::string> maps;  // empty: maps of `split` in splits.json
    int batch_size = 10;
    std::string out;                // optional eval.csv + manifest
};

nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j);
double run_eval(EvalConfig c);

// ---- derain ----

struct DerainCommandConfig {
    std::string checkpoint;
    std::string input;  // directory of PNGs or a single PNG
    std::string out;
    bool preprocess = false;  // centre-crop and resize inputs to the checkpoint resolution
    int batch_size = 10;
};

nlohmann::json to_json(const DerainCommandConfig& c);
DerainCommandConfig derain_command_from_json(const nlohmann::json& j);
// Returns the number of images written.
std::size_t run_derain(const DerainCommandConfig& c);

// ---- train-pilot ----

struct PilotCommandConfig {
    PilotTrainConfig pilot;
    std::string data;
    std::vector<std::string> maps;  // empty: training maps from splits.json
    int resolution = 64;            // square frame size the pilot inputs are cut from
    double steering_ratio = kDefaultSteeringRatio;
    std::string out;
};

nlohmann::json to_json(const PilotCommandConfig& c);
PilotCommandConfig pilot_command_from_json(const nlohmann::json& j);
PilotTrainResult run_train_pilot(PilotCommandConfig c);

// ---- steer ----

struct SteerCommandConfig {
    std::string pilot_checkpoint;
    std::string derain_checkpoint;
    std::string data;
    std::string map;         // empty: first test map in splits.json
    std::string light_data;  // root holding the light-rain copy; empty: <data>/light_rain when present
    std::string exclude;     // frame ranges, e.g. "40-60,120-130"
    double steering_ratio = 0.0;  // 0: the ratio the pilot was trained with
    std::string out;
};

nlohmann::json to_json(const SteerCommandConfig& c);
SteerCommandConfig steer_command_from_json(const nlohmann::json& j);
SteeringReport run_steer(SteerCommandConfig c);

// ---- dump ----

struct DumpCommandConfig {
    std::string checkpoint;
    std::string data;
    std::string map;
    std::vector<int> frames;
    std::string baseline;  // external derainer outputs, frame_%06d.png
    bool strip = false;
    std::string out;
};

nlohmann::json to_json(const DumpCommandConfig& c);
DumpCommandConfig dump_command_from_json(const nlohmann::json& j);
std::vector<std::filesystem::path> run_dump(const DumpCommandConfig& c);

// ---- rerun ----

// Replays the command recorded in a manifest. A non-empty out_override redirects outputs.
void rerun(const std::filesystem::path& manifest, const std::string& out_override = {});

}  // namespace derain
