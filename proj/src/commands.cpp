#include "derain/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "derain/errors.hpp"
#include "derain/frame_store.hpp"
#include "derain/manifest.hpp"
#include "derain/rng.hpp"
#include "derain/steering.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace derain {

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

void require(const std::string& value, const char* what) {
    if (value.empty()) throw UsageError(std::string(what) + " is required");
}

std::vector<std::string> map_inputs(const std::string& root, const std::vector<std::string>& maps) {
    std::vector<std::string> out;
    for (const auto& m : maps) out.push_back((fs::path(root) / m).string());
    return out;
}

RunManifest manifest_for(const std::string& command, json config) {
    RunManifest m;
    m.command = command;
    m.config = std::move(config);
    m.deterministic = deterministic_mode();
    return m;
}

}  // namespace

DataSplits read_splits(const fs::path& root) {
    if (!fs::is_directory(root)) throw ConfigError("dataset root not found: " + root.string());
    DataSplits s;
    const fs::path file = root / kSplitsFile;
    if (!fs::exists(file)) {
        s.train = list_maps(root);
        return s;
    }
    const json j = read_json(file);
    s.train = get_or(j, "train", s.train);
    s.validation = get_or(j, "validation", s.validation);
    s.test = get_or(j, "test", s.test);
    return s;
}

// ---- synth ----

SynthConfig default_synth_config() {
    using synth::Palette;
    SynthConfig c;
    c.maps = {{"town01", "train", Palette::urban},    {"town03", "train", Palette::urban},
              {"town04", "train", Palette::highway},  {"town07", "train", Palette::rural},
              {"town10", "train", Palette::urban},    {"town02", "validation", Palette::rural},
              {"town05", "test", Palette::highway}};
    return c;
}

json to_json(const SynthConfig& c) {
    json maps = json::array();
    for (const auto& m : c.maps) maps.push_back({{"name", m.name}, {"split", m.split}, {"palette", to_string(m.palette)}});
    return {{"maps", maps},           {"resolution", c.resolution},   {"n_frames", c.n_frames},
            {"seed", c.seed},         {"max_curvature", c.max_curvature}, {"rain_preset", c.rain_preset},
            {"light_variant", c.light_variant}, {"out", c.out},      {"force", c.force}};
}

SynthConfig synth_config_from_json(const json& j) {
    SynthConfig c = default_synth_config();
    if (j.contains("maps")) {
        c.maps.clear();
        for (const auto& m : j["maps"]) {
            SynthMapEntry e;
            e.name = get_or<std::string>(m, "name", "");
            e.split = get_or<std::string>(m, "split", "train");
            e.palette = synth::palette_from_string(get_or<std::string>(m, "palette", "urban"));
            c.maps.push_back(e);
        }
    }
    c.resolution = get_or(j, "resolution", c.resolution);
    c.n_frames = get_or(j, "n_frames", c.n_frames);
    c.seed = get_or(j, "seed", c.seed);
    c.max_curvature = get_or(j, "max_curvature", c.max_curvature);
    c.rain_preset = get_or(j, "rain_preset", c.rain_preset);
    c.light_variant = get_or(j, "light_variant", c.light_variant);
    c.out = get_or(j, "out", c.out);
    c.force = get_or(j, "force", c.force);
    return c;
}

MapSeeds map_seeds(std::uint64_t seed, std::size_t pos) {
    const std::uint64_t base = derive_seed(seed, pos);
    return {derive_seed(base, 0), derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3)};
}

synth::SceneSpec scene_for(const SynthConfig& c, std::size_t pos) {
    const auto seeds = map_seeds(c.seed, pos);
    synth::SceneSpec s;
    s.map_name = c.maps.at(pos).name;
    s.n_frames = c.n_frames;
    s.seed = seeds.scene;
    s.resolution = c.resolution;
    s.curvature_profile = synth::random_curvature_profile(c.n_frames, seeds.curvature, c.max_curvature);
    s.palette = c.maps.at(pos).palette;
    return s;
}

synth::RainSpec rain_for(const SynthConfig& c, std::size_t pos, bool light) {
    const auto seeds = map_seeds(c.seed, pos);
    if (light) return synth::RainSpec::light(c.resolution, seeds.light_rain);
    if (c.rain_preset == "heavy") return synth::RainSpec::heavy(c.resolution, seeds.rain);
    if (c.rain_preset == "light") return synth::RainSpec::light(c.resolution, seeds.rain);
    throw ConfigError("unknown rain preset '" + c.rain_preset + "' (heavy or light)");
}

namespace {

void check_contrast(const synth::SyntheticMap& map) {
    const auto tc = synth::temporal_contrast(map);
    if (!(tc.mean_clear_diff < tc.mean_rain_diff))
        throw IntegrityError("map '" + map.scene_spec.map_name + "': scene changes faster than rain (" +
                             std::to_string(tc.mean_clear_diff) + " >= " + std::to_string(tc.mean_rain_diff) + ")");
}

}  // namespace

void run_synth(const SynthConfig& c) {
    require(c.out, "output directory");
    if (c.maps.empty()) throw ConfigError("synth config lists no maps");
    std::set<std::string> names;
    for (const auto& m : c.maps) {
        if (m.name.empty()) throw ConfigError("map with empty name");
        if (!names.insert(m.name).second) throw ConfigError("map '" + m.name + "' listed twice");
        if (m.split != "train" && m.split != "validation" && m.split != "test")
            throw ConfigError("map '" + m.name + "': unknown split '" + m.split + "'");
    }
    const fs::path out(c.out);
    if (fs::exists(out) && !fs::is_empty(out) && !c.force)
        throw UsageError(out.string() + " exists and is not empty; pass --force to overwrite");

    fs::create_directories(out);
    DataSplits splits;
    RunManifest manifest = manifest_for("synth", to_json(c));
    manifest.seeds["seed"] = c.seed;
    for (std::size_t i = 0; i < c.maps.size(); ++i) {
        const auto& entry = c.maps[i];
        const auto scene = scene_for(c, i);
        const auto rain = rain_for(c, i);
        manifest.seeds[entry.name + ".scene"] = scene.seed;
        manifest.seeds[entry.name + ".rain"] = rain.seed;
        std::cerr << "synth: " << entry.name << " (" << entry.split << ", " << c.n_frames << " frames)\n";
        const auto map = synth::synthesize_map(scene, rain);
        check_contrast(map);
        fs::remove_all(out / entry.name);
        synth::write_map(map, out);
        manifest.outputs.push_back((out / entry.name).string());
        (entry.split == "train" ? splits.train : entry.split == "validation" ? splits.validation : splits.test)
            .push_back(entry.name);

        if (c.light_variant && entry.split == "test") {
            const auto light_rain = rain_for(c, i, true);
            manifest.seeds[entry.name + ".light_rain"] = light_rain.seed;
            const auto light = synth::synthesize_map(scene, light_rain);
            check_contrast(light);
            fs::remove_all(out / kLightRainDir / entry.name);
            synth::write_map(light, out / kLightRainDir);
            manifest.outputs.push_back((out / kLightRainDir / entry.name).string());
        }
    }
    write_json(out / kSplitsFile, {{"train", splits.train}, {"validation", splits.validation}, {"test", splits.test}});
    manifest.outputs.push_back((out / kSplitsFile).string());
    write_manifest(out, manifest);
}

// ---- train ----

json to_json(const TrainCommandConfig& c) {
    return {{"train", to_json(c.train)},          {"data", c.data},
            {"out", c.out},                       {"train_maps", c.train_maps},
            {"validation_maps", c.validation_maps}, {"test_maps", c.test_maps}};
}

TrainCommandConfig train_command_from_json(const json& j) {
    TrainCommandConfig c;
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    c.data = get_or(j, "data", c.data);
    c.out = get_or(j, "out", c.out);
    c.train_maps = get_or(j, "train_maps", c.train_maps);
    c.validation_maps = get_or(j, "validation_maps", c.validation_maps);
    c.test_maps = get_or(j, "test_maps", c.test_maps);
    return c;
}

void resolve_maps(TrainCommandConfig& c) {
    require(c.data, "data directory");
    if (!c.train_maps.empty()) return;
    const auto s = read_splits(c.data);
    c.train_maps = s.train;
    if (c.validation_maps.empty()) c.validation_maps = s.validation;
    if (c.test_maps.empty()) c.test_maps = s.test;
}

TrainResult run_train(TrainCommandConfig c) {
    resolve_maps(c);
    require(c.out, "output directory");
    if (c.train_maps.empty()) throw ConfigError("no training maps in " + c.data);
    const int res = c.train.arch.resolution;
    const FrameStore train_set = load_store(c.data, c.train_maps, res);
    const FrameStore val_set = c.validation_maps.empty() ? FrameStore(res) : load_store(c.data, c.validation_maps, res);
    const FrameStore test_set = c.test_maps.empty() ? FrameStore(res) : load_store(c.data, c.test_maps, res);

    const fs::path out(c.out);
    fs::create_directories(out);
    write_json(out / "config.json", to_json(c));
    auto result = train(c.train, train_set, val_set.empty() ? nullptr : &val_set,
                        test_set.empty() ? nullptr : &test_set, {out, true});

    RunManifest m = manifest_for("train", to_json(c));
    for (const auto* maps : {&c.train_maps, &c.validation_maps, &c.test_maps})
        for (auto& p : map_inputs(c.data, *maps)) m.inputs.push_back(p);
    m.outputs = {(out / "checkpoint.pt").string(), (out / "loss.csv").string(), (out / "plans").string(),
                 (out / "config.json").string()};
    m.seeds["seed"] = c.train.seed;
    write_manifest(out, m);
    return result;
}

// ---- eval ----

json to_json(const EvalConfig& c) {
    return {{"checkpoint", c.checkpoint}, {"data", c.data},         {"split", c.split},
            {"maps", c.maps},             {"batch_size", c.batch_size}, {"out", c.out}};
}

EvalConfig eval_config_from_json(const json& j) {
    EvalConfig c;
    c.checkpoint = get_or(j, "checkpoint", c.checkpoint);
    c.data = get_or(j, "data", c.data);
    c.split = get_or(j, "split", c.split);
    c.maps = get_or(j, "maps", c.maps);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    c.out = get_or(j, "out", c.out);
    return c;
}

double run_eval(EvalConfig c) {
    require(c.checkpoint, "checkpoint");
    require(c.data, "data directory");
    if (c.maps.empty()) {
        const auto s = read_splits(c.data);
        if (c.split == "train") c.maps = s.train;
        else if (c.split == "validation") c.maps = s.validation;
        else if (c.split == "test") c.maps = s.test;
        else throw ConfigError("unknown split '" + c.split + "'");
    }
    if (c.maps.empty()) throw EmptyDatasetError("split '" + c.split + "' has no maps in " + c.data);

    auto ckpt = load_checkpoint(c.checkpoint);
    const FrameStore data = load_store(c.data, c.maps, ckpt.arch.resolution);
    const double mse = evaluate_mse(ckpt.net, data, c.batch_size);
    if (!c.out.empty()) {
        const fs::path out(c.out);
        fs::create_directories(out);
        std::ofstream csv(out / "eval.csv");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", mse);
        csv << "split,mse,n_frames\n" << c.split << ',' << buf << ',' << data.size() << '\n';
        RunManifest m = manifest_for("eval", to_json(c));
        m.inputs = map_inputs(c.data, c.maps);
        m.inputs.insert(m.inputs.begin(), c.checkpoint);
        m.outputs = {(out / "eval.csv").string()};
        write_manifest(out, m);
    }
    return mse;
}

// ---- derain ----

json to_json(const DerainCommandConfig& c) {
    return {{"checkpoint", c.checkpoint}, {"input", c.input},          {"out", c.out},
            {"preprocess", c.preprocess}, {"batch_size", c.batch_size}};
}

DerainCommandConfig derain_command_from_json(const json& j) {
    DerainCommandConfig c;
    c.checkpoint = get_or(j, "checkpoint", c.checkpoint);
    c.input = get_or(j, "input", c.input);
    c.out = get_or(j, "out", c.out);
    c.preprocess = get_or(j, "preprocess", c.preprocess);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    return c;
}

std::size_t run_derain(const DerainCommandConfig& c) {
    require(c.checkpoint, "checkpoint");
    require(c.input, "input");
    require(c.out, "output directory");
    if (c.batch_size < 1) throw ConfigError("batch size must be positive");
    const fs::path input(c.input), out(c.out);
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(input)) {
        files.push_back(input);
    } else {
        throw ConfigError("input not found: " + c.input);
    }
    if (files.empty()) throw EmptyDatasetError("no PNG files in " + c.input);
    fs::create_directories(out);
    if (fs::is_directory(input) && fs::equivalent(input, out))
        throw UsageError("output directory must differ from the input directory");

    auto ckpt = load_checkpoint(c.checkpoint);
    const int res = ckpt.arch.resolution;
    for (std::size_t i = 0; i < files.size(); i += static_cast<std::size_t>(c.batch_size)) {
        const auto end = std::min(files.size(), i + static_cast<std::size_t>(c.batch_size));
        std::vector<Image> images;
        for (std::size_t k = i; k < end; ++k) {
            Image im = read_png(files[k]);
            if (c.preprocess) {
                im = preprocess(im, res);
            } else if (im.height != res || im.width != res) {
                throw ConfigError(files[k].string() + " is " + std::to_string(im.width) + "x" +
                                  std::to_string(im.height) + " but the checkpoint expects " + std::to_string(res) +
                                  "x" + std::to_string(res) + " (use --preprocess to crop and resize)");
            }
            images.push_back(std::move(im));
        }
        const auto derained = tensor_to_images(derain(ckpt.net, images_to_tensor(images), c.batch_size));
        for (std::size_t k = i; k < end; ++k) write_png(out / files[k].filename(), derained[k - i]);
    }

    RunManifest m = manifest_for("derain", to_json(c));
    m.inputs = {c.checkpoint, c.input};
    m.outputs = {c.out};
    write_manifest(out, m);
    return files.size();
}

// ---- train-pilot ----

json to_json(const PilotCommandConfig& c) {
    return {{"epochs", c.pilot.epochs},
            {"batch_size", c.pilot.batch_size},
            {"learning_rate", c.pilot.learning_rate},
            {"seed", c.pilot.seed},
            {"data", c.data},
            {"maps", c.maps},
            {"resolution", c.resolution},
            {"steering_ratio", c.steering_ratio},
            {"out", c.out}};
}

PilotCommandConfig pilot_command_from_json(const json& j) {
    PilotCommandConfig c;
    c.pilot.epochs = get_or(j, "epochs", c.pilot.epochs);
    c.pilot.batch_size = get_or(j, "batch_size", c.pilot.batch_size);
    c.pilot.learning_rate = get_or(j, "learning_rate", c.pilot.learning_rate);
    c.pilot.seed = get_or(j, "seed", c.pilot.seed);
    c.data = get_or(j, "data", c.data);
    c.maps = get_or(j, "maps", c.maps);
    c.resolution = get_or(j, "resolution", c.resolution);
    c.steering_ratio = get_or(j, "steering_ratio", c.steering_ratio);
    c.out = get_or(j, "out", c.out);
    return c;
}

PilotTrainResult run_train_pilot(PilotCommandConfig c) {
    require(c.data, "data directory");
    require(c.out, "output directory");
    if (c.maps.empty()) c.maps = read_splits(c.data).train;
    if (c.maps.empty()) throw EmptyDatasetError("no maps to train the steering model on");
    const FrameStore store = load_store(c.data, c.maps, c.resolution);

    std::vector<torch::Tensor> inputs;
    std::vector<double> angles;
    for (const auto& m : store.maps()) {
        if (m.steering.empty()) throw ConfigError("map '" + m.name + "' has no steering data");
        std::map<int, double> by_frame;
        for (const auto& r : m.steering) by_frame[r.frame_index] = r.drive_wheel_angle_deg;
        for (int f : m.frames) angles.push_back(drive_to_steering_angle(by_frame.at(f), c.steering_ratio));
        inputs.push_back(pilot_inputs(m.clear));
    }
    auto result = train_pilotnet(torch::cat(inputs), angles, c.pilot);
    result.checkpoint.steering_ratio = c.steering_ratio;
    result.checkpoint.source_resolution = c.resolution;

    const fs::path out(c.out);
    fs::create_directories(out);
    save_pilot_checkpoint(out / "pilot.pt", result.checkpoint);
    {
        std::ofstream csv(out / "pilot_loss.csv");
        csv << "epoch,mse_deg2\n";
        char buf[64];
        for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, result.loss_history[e]);
            csv << buf;
        }
    }
    RunManifest m = manifest_for("train-pilot", to_json(c));
    m.inputs = map_inputs(c.data, c.maps);
    m.outputs = {(out / "pilot.pt").string(), (out / "pilot_loss.csv").string()};
    m.seeds["seed"] = c.pilot.seed;
    write_manifest(out, m);
    return result;
}

// ---- steer ----

json to_json(const SteerCommandConfig& c) {
    return {{"pilot_checkpoint", c.pilot_checkpoint},
            {"derain_checkpoint", c.derain_checkpoint},
            {"data", c.data},
            {"map", c.map},
            {"light_data", c.light_data},
            {"exclude", c.exclude},
            {"steering_ratio", c.steering_ratio},
            {"out", c.out}};
}

SteerCommandConfig steer_command_from_json(const json& j) {
    SteerCommandConfig c;
    c.pilot_checkpoint = get_or(j, "pilot_checkpoint", c.pilot_checkpoint);
    c.derain_checkpoint = get_or(j, "derain_checkpoint", c.derain_checkpoint);
    c.data = get_or(j, "data", c.data);
    c.map = get_or(j, "map", c.map);
    c.light_data = get_or(j, "light_data", c.light_data);
    c.exclude = get_or(j, "exclude", c.exclude);
    c.steering_ratio = get_or(j, "steering_ratio", c.steering_ratio);
    c.out = get_or(j, "out", c.out);
    return c;
}

SteeringReport run_steer(SteerCommandConfig c) {
    require(c.pilot_checkpoint, "pilot checkpoint");
    require(c.derain_checkpoint, "derain checkpoint");
    require(c.data, "data directory");
    require(c.out, "output directory");
    if (c.map.empty()) {
        const auto s = read_splits(c.data);
        if (s.test.empty()) throw ConfigError("no test map in " + c.data + "; pass --map");
        c.map = s.test.front();
    }
    if (c.light_data.empty() && fs::is_directory(fs::path(c.data) / kLightRainDir / c.map))
        c.light_data = (fs::path(c.data) / kLightRainDir).string();

    auto pilot = load_pilot_checkpoint(c.pilot_checkpoint);
    auto derainer = load_checkpoint(c.derain_checkpoint);
    if (c.steering_ratio <= 0.0) c.steering_ratio = pilot.steering_ratio;
    const int res = derainer.arch.resolution;
    if (pilot.source_resolution != 0 && pilot.source_resolution != res)
        std::cerr << "warning: steering model was trained on " << pilot.source_resolution << " px frames, evaluating on "
                  << res << " px\n";

    const std::vector<std::string> maps{c.map};
    const FrameStore store = load_store(c.data, maps, res);
    FrameStore light(res);
    if (!c.light_data.empty()) light = load_store(c.light_data, maps, res);
    const auto report = build_report(pilot, derainer.net, store.map(c.map), light.empty() ? nullptr : &light.map(c.map),
                                     parse_frame_ranges(c.exclude), c.steering_ratio);
    const auto files = write_report(report, c.out);

    RunManifest m = manifest_for("steer", to_json(c));
    m.inputs = {c.pilot_checkpoint, c.derain_checkpoint, (fs::path(c.data) / c.map).string()};
    if (!c.light_data.empty()) m.inputs.push_back((fs::path(c.light_data) / c.map).string());
    for (const auto& f : files) m.outputs.push_back(f.string());
    write_manifest(c.out, m);
    return report;
}

// ---- dump ----

json to_json(const DumpCommandConfig& c) {
    return {{"checkpoint", c.checkpoint}, {"data", c.data},   {"map", c.map}, {"frames", c.frames},
            {"baseline", c.baseline},     {"strip", c.strip}, {"out", c.out}};
}

DumpCommandConfig dump_command_from_json(const json& j) {
    DumpCommandConfig c;
    c.checkpoint = get_or(j, "checkpoint", c.checkpoint);
    c.data = get_or(j, "data", c.data);
    c.map = get_or(j, "map", c.map);
    c.frames = get_or(j, "frames", c.frames);
    c.baseline = get_or(j, "baseline", c.baseline);
    c.strip = get_or(j, "strip", c.strip);
    c.out = get_or(j, "out", c.out);
    return c;
}

std::vector<fs::path> run_dump(const DumpCommandConfig& c) {
    require(c.checkpoint, "checkpoint");
    require(c.data, "data directory");
    require(c.map, "map");
    require(c.out, "output directory");
    if (c.frames.empty()) throw ConfigError("no frames requested");
    auto ckpt = load_checkpoint(c.checkpoint);
    const std::vector<std::string> maps{c.map};
    const FrameStore store = load_store(c.data, maps, ckpt.arch.resolution);
    const auto files = dump_comparisons(ckpt.net, store, c.map, c.frames, c.out, {c.baseline, c.strip});

    RunManifest m = manifest_for("dump", to_json(c));
    m.inputs = {c.checkpoint, (fs::path(c.data) / c.map).string()};
    if (!c.baseline.empty()) m.inputs.push_back(c.baseline);
    for (const auto& f : files) m.outputs.push_back(f.string());
    write_manifest(c.out, m);
    return files;
}

// ---- rerun ----

void rerun(const fs::path& manifest_path, const std::string& out_override) {
    const RunManifest m = read_manifest(manifest_path);
    json cfg = m.config;
    if (!out_override.empty()) cfg["out"] = out_override;
    if (m.command == "synth") run_synth(synth_config_from_json(cfg));
    else if (m.command == "train") run_train(train_command_from_json(cfg));
    else if (m.command == "eval") std::cerr << "eval mse " << run_eval(eval_config_from_json(cfg)) << "\n";
    else if (m.command == "derain") run_derain(derain_command_from_json(cfg));
    else if (m.command == "train-pilot") run_train_pilot(pilot_command_from_json(cfg));
    else if (m.command == "steer") run_steer(steer_command_from_json(cfg));
    else if (m.command == "dump") run_dump(dump_command_from_json(cfg));
    else throw ConfigError("manifest names unknown command '" + m.command + "'");
}

}  // namespace derain
