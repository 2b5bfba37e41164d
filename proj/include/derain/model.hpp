#pragma once

// Encoder-decoder deraining network: DCGAN-style strided convolutions down to a 1x1
// sigmoid code, transposed convolutions back up, and at every decoder resolution a
// channel-wise concatenation with the matching encoder feature followed by a 1x1
// convolution that restores the scheduled width.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace derain {

struct ArchConfig {
    int resolution = 256;
    int base_channels = 64;
    int channel_cap = 512;
    int latent_channels = 512;
    int in_channels = 3;
    int out_channels = 3;

    void validate() const;  // ConfigError unless resolution is a power of two >= 16, widths positive
    int stages() const;     // log2(resolution) - 2
    int stage_channels(int stage) const;  // min(base * 2^stage, cap)

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

nlohmann::json to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const nlohmann::json& j);

enum class LayerKind { conv, conv_transpose, fuse_1x1 };
enum class Activation { relu, sigmoid, tanh };

std::string to_string(LayerKind k);
std::string to_string(Activation a);

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 4;
    int stride = 2;
    int padding = 1;
    bool batch_norm = true;
    bool bias = false;  // only layers without normalisation carry a bias
    Activation activation = Activation::relu;
    int spatial_in = 0;
    int spatial_out = 0;
};

using LayerTable = std::vector<LayerSpec>;

struct LayerTables {
    LayerTable encoder;  // stage convolutions, then the latent convolution last
    LayerTable decoder;  // alternating transposed conv / 1x1 fuse, final output layer last
};

LayerTables build_layer_table(const ArchConfig& cfg);

// Trainable parameters (weights, biases, BatchNorm affine terms) summed from the table.
std::int64_t parameter_count(const ArchConfig& cfg);

// Encoder features captured after each stage's activation, highest resolution first.
struct SkipBundle {
    std::vector<torch::Tensor> features;
};

struct Encoded {
    torch::Tensor latent;  // B x latent x 1 x 1, in (0, 1)
    SkipBundle skips;
};

class DerainNetImpl : public torch::nn::Module {
public:
    explicit DerainNetImpl(const ArchConfig& cfg);

    Encoded encode(const torch::Tensor& images) const;
    // Raw decoder output in [-1, 1].
    torch::Tensor decode(const torch::Tensor& latent, const SkipBundle& skips) const;
    // Rainy images in [0,1] -> derained images in [0,1].
    torch::Tensor forward(const torch::Tensor& images) const;

    const ArchConfig& config() const { return cfg_; }
    const LayerTables& tables() const { return tables_; }

    // The last decoder layer (transposed conv producing the output image).
    torch::nn::ConvTranspose2d output_layer() const { return output_; }

private:
    ArchConfig cfg_;
    LayerTables tables_;
    std::vector<torch::nn::Sequential> encoder_;
    std::vector<torch::nn::Sequential> decoder_;
    torch::nn::ConvTranspose2d output_{nullptr};
};

TORCH_MODULE(DerainNet);

// Weights ~ N(0, 0.02), BatchNorm gamma ~ N(1, 0.02), biases and beta zero.
void init_weights(torch::nn::Module& module, std::uint64_t seed);

// Derained images in [0,1] (evaluation mode, no gradients), processed in chunks of batch_size.
torch::Tensor derain(DerainNet& net, const torch::Tensor& rainy, int batch_size = 10);

struct DerainCheckpoint {
    ArchConfig arch;
    DerainNet net{nullptr};
    std::int64_t step = 0;
    std::uint64_t plan_seed = 0;
    std::string scheme;
};

inline constexpr const char* kCheckpointFormat = "derain-checkpoint";
inline constexpr std::int64_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const DerainCheckpoint& ckpt);
DerainCheckpoint load_checkpoint(const std::filesystem::path& path);

// Deep copy of parameters and buffers into a fresh network.
DerainNet clone_net(const DerainNet& net);

}  // namespace derain
