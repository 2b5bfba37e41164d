#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "derain/batching.hpp"
#include "derain/frame_store.hpp"
#include "derain/model.hpp"

namespace derain {

enum class Split { train, validation, test };
std::string to_string(Split s);

struct LossRecord {
    int epoch = 0;  // 1-based
    Split split = Split::train;
    double mse = 0.0;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 10;
    double learning_rate = 0.0002;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    Scheme scheme = Scheme::strb;
    std::uint64_t seed = 0;
    ArchConfig arch;
    int checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
    bool sliding_pairs = false;
    // Directory of epoch_NNNN.csv plans to replay instead of planning afresh.
    std::filesystem::path replay_plans;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Where train() writes artifacts. Everything is optional.
struct TrainOutputs {
    std::filesystem::path dir;  // checkpoints, loss.csv and plans/ when non-empty
    bool log_progress = true;   // per-epoch line on stderr
};

struct TrainResult {
    DerainCheckpoint checkpoint;
    std::vector<LossRecord> history;
};

// Adam on pixel MSE in [0,1] space. Each epoch draws a fresh plan seeded with
// cfg.seed + epoch. Validation and test losses (when given) are full evaluation passes.
TrainResult train(const TrainConfig& cfg, const FrameStore& train_set, const FrameStore* validation = nullptr,
                  const FrameStore* test = nullptr, const TrainOutputs& outputs = {});

// Maps a [B,3,R,R] rainy batch in [0,1] to its derained estimate.
using Predictor = std::function<torch::Tensor(const torch::Tensor&)>;

// Mean per-pixel squared error of the prediction against clear, accumulated in double.
double evaluate_mse(const Predictor& predict, const FrameStore& data, int batch_size = 10);
// Same for a network, in evaluation mode.
double evaluate_mse(DerainNet& net, const FrameStore& data, int batch_size = 10);

// Same metric for a predictor that always outputs `value`.
double constant_predictor_mse(const FrameStore& data, double value = 0.5);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);
std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

std::string plan_filename(int epoch);

struct DumpOptions {
    std::filesystem::path baseline_dir;  // external derainer output, frame_%06d.png
    bool strip = false;                  // three consecutive frames stacked in one file
};

// Comparison panels rainy | clear | derained [| baseline]. Returns the files written.
std::vector<std::filesystem::path> dump_comparisons(DerainNet& net, const FrameStore& data,
                                                    const std::string& map_name, const std::vector<int>& frames,
                                                    const std::filesystem::path& out_dir,
                                                    const DumpOptions& options = {});

}  // namespace derain
