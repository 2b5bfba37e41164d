#pragma once

// PilotNet-style steering regressor used to score how much deraining helps a
// downstream driving model.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "derain/image.hpp"

namespace derain {

struct PilotNetConfig {
    int input_height = 66;
    int input_width = 200;
    std::array<int, 5> conv_channels{24, 36, 48, 64, 64};
    std::array<int, 5> conv_kernels{5, 5, 5, 3, 3};
    std::array<int, 5> conv_strides{2, 2, 2, 1, 1};
    std::array<int, 3> hidden{100, 50, 10};

    // Flattened feature count after the convolution stack.
    std::int64_t flat_features() const;
};

class PilotNetImpl : public torch::nn::Module {
public:
    explicit PilotNetImpl(const PilotNetConfig& cfg = {});

    // [B,3,66,200] RGB in [0,1] -> [B] raw outputs.
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Linear output_layer() { return out_; }
    const PilotNetConfig& config() const { return cfg_; }

private:
    PilotNetConfig cfg_;
    torch::nn::Sequential features_;
    torch::nn::Sequential head_;
    torch::nn::Linear out_{nullptr};
};

TORCH_MODULE(PilotNet);

struct PilotCheckpoint {
    PilotNetConfig cfg;
    PilotNet net{nullptr};
    // Prediction in degrees = target_mean + target_scale * net(x).
    double target_mean = 0.0;
    double target_scale = 1.0;
    double steering_ratio = 15.0;
    int source_resolution = 0;  // square frame size the pilot inputs were cut from
};

struct PilotTrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
};

struct PilotTrainResult {
    PilotCheckpoint checkpoint;
    std::vector<double> loss_history;  // per-epoch mean squared error, degrees^2
};

// Centre band with the network's aspect ratio, resized to input_height x input_width.
Image pilot_input(const Image& frame, const PilotNetConfig& cfg = {});
// Same for a [N,3,R,R] batch; returns [N,3,66,200].
torch::Tensor pilot_inputs(const torch::Tensor& frames, const PilotNetConfig& cfg = {});

// Minimises MSE on steering-wheel angles (degrees). `images` are pilot inputs.
PilotTrainResult train_pilotnet(const torch::Tensor& images, std::span<const double> angles_deg,
                                const PilotTrainConfig& cfg, const PilotNetConfig& net_cfg = {});

// One angle (degrees) per image, evaluation mode.
std::vector<double> predict_steering(PilotCheckpoint& ckpt, const torch::Tensor& images, int batch_size = 64);

void save_pilot_checkpoint(const std::filesystem::path& path, const PilotCheckpoint& ckpt);
PilotCheckpoint load_pilot_checkpoint(const std::filesystem::path& path);

}  // namespace derain
