#include "derain/pilotnet.hpp"

#include <cmath>
#include <numeric>

#include "derain/errors.hpp"
#include "derain/frame_store.hpp"
#include "derain/rng.hpp"

namespace derain {

namespace nn = torch::nn;

std::int64_t PilotNetConfig::flat_features() const {
    std::int64_t h = input_height, w = input_width;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        h = (h - conv_kernels[i]) / conv_strides[i] + 1;
        w = (w - conv_kernels[i]) / conv_strides[i] + 1;
    }
    if (h < 1 || w < 1) throw ConfigError("PilotNet input too small for its convolution stack");
    return h * w * conv_channels.back();
}

PilotNetImpl::PilotNetImpl(const PilotNetConfig& cfg) : cfg_(cfg) {
    int in = 3;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        features_->push_back(nn::Conv2d(
            nn::Conv2dOptions(in, cfg.conv_channels[i], cfg.conv_kernels[i]).stride(cfg.conv_strides[i])));
        features_->push_back(nn::ReLU());
        in = cfg.conv_channels[i];
    }
    features_->push_back(nn::Flatten());
    std::int64_t width = cfg.flat_features();
    for (int h : cfg.hidden) {
        head_->push_back(nn::Linear(width, h));
        head_->push_back(nn::ReLU());
        width = h;
    }
    register_module("features", features_);
    register_module("head", head_);
    out_ = register_module("out", nn::Linear(width, 1));
}

torch::Tensor PilotNetImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != cfg_.input_height || x.size(3) != cfg_.input_width)
        throw ShapeError("PilotNet expects [B,3," + std::to_string(cfg_.input_height) + "," +
                         std::to_string(cfg_.input_width) + "] inputs");
    // Fixed normalisation layer: [0,1] -> [-1,1].
    auto h = features_->forward(x * 2.0 - 1.0);
    return out_->forward(head_->forward(h)).squeeze(1);
}

Image pilot_input(const Image& frame, const PilotNetConfig& cfg) {
    const double aspect = static_cast<double>(cfg.input_height) / cfg.input_width;
    int band = static_cast<int>(std::lround(frame.width * aspect));
    band = std::clamp(band, 1, frame.height);
    const Image cropped = crop(frame, (frame.height - band) / 2, 0, band, frame.width);
    return resize_bilinear(cropped, cfg.input_height, cfg.input_width);
}

torch::Tensor pilot_inputs(const torch::Tensor& frames, const PilotNetConfig& cfg) {
    auto images = tensor_to_images(frames);
    for (auto& im : images) im = pilot_input(im, cfg);
    if (images.empty()) return torch::empty({0, 3, cfg.input_height, cfg.input_width});
    return images_to_tensor(images);
}

PilotTrainResult train_pilotnet(const torch::Tensor& images, std::span<const double> angles_deg,
                                const PilotTrainConfig& cfg, const PilotNetConfig& net_cfg) {
    if (images.size(0) == 0 || angles_deg.empty()) throw EmptyDatasetError("PilotNet training set is empty");
    if (images.size(0) != static_cast<std::int64_t>(angles_deg.size()))
        throw ShapeError("PilotNet: image and angle counts differ");
    if (cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("PilotNet: invalid batch size or epochs");

    const double n = static_cast<double>(angles_deg.size());
    const double mean = std::reduce(angles_deg.begin(), angles_deg.end()) / n;
    double var = 0.0;
    for (double a : angles_deg) var += (a - mean) * (a - mean);
    const double stdev = std::sqrt(var / n);

    PilotTrainResult result;
    auto& ckpt = result.checkpoint;
    ckpt.cfg = net_cfg;
    ckpt.target_mean = mean;
    ckpt.target_scale = stdev > 1e-9 ? stdev : 1.0;
    torch::manual_seed(cfg.seed);
    ckpt.net = PilotNet(net_cfg);

    std::vector<float> targets(angles_deg.size());
    for (std::size_t i = 0; i < targets.size(); ++i)
        targets[i] = static_cast<float>((angles_deg[i] - ckpt.target_mean) / ckpt.target_scale);
    const auto target_tensor = torch::from_blob(targets.data(), {static_cast<std::int64_t>(targets.size())},
                                                torch::kFloat32)
                                   .clone();

    torch::optim::Adam opt(ckpt.net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
    Rng rng(derive_seed(cfg.seed, 0x9170));
    std::vector<std::int64_t> order(targets.size());
    std::iota(order.begin(), order.end(), 0);

    ckpt.net->train();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double sum = 0.0;
        for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
            const auto end = std::min(order.size(), i + cfg.batch_size);
            const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + i, order.begin() + end));
            auto loss = torch::mse_loss(ckpt.net->forward(images.index_select(0, idx)), target_tensor.index_select(0, idx));
            const double v = loss.item<double>();
            if (!std::isfinite(v)) throw DivergenceError("PilotNet: non-finite loss at epoch " + std::to_string(epoch + 1));
            opt.zero_grad();
            loss.backward();
            opt.step();
            sum += v * static_cast<double>(end - i);
        }
        result.loss_history.push_back(sum / n * ckpt.target_scale * ckpt.target_scale);
    }
    ckpt.net->eval();
    return result;
}

std::vector<double> predict_steering(PilotCheckpoint& ckpt, const torch::Tensor& images, int batch_size) {
    const auto& cfg = ckpt.net->config();
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != cfg.input_height ||
        images.size(3) != cfg.input_width)
        throw ShapeError("predict_steering expects [N,3," + std::to_string(cfg.input_height) + "," +
                         std::to_string(cfg.input_width) + "]");
    const bool was_training = ckpt.net->is_training();
    ckpt.net->eval();
    torch::NoGradGuard guard;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(images.size(0)));
    for (std::int64_t i = 0; i < images.size(0); i += batch_size) {
        const auto y = ckpt.net->forward(images.slice(0, i, std::min<std::int64_t>(images.size(0), i + batch_size)))
                           .to(torch::kFloat64)
                           .contiguous();
        const double* p = y.data_ptr<double>();
        for (std::int64_t k = 0; k < y.size(0); ++k) out.push_back(ckpt.target_mean + ckpt.target_scale * p[k]);
    }
    ckpt.net->train(was_training);
    return out;
}

void save_pilot_checkpoint(const std::filesystem::path& path, const PilotCheckpoint& ckpt) {
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string("pilotnet-checkpoint")));
    archive.write("version", c10::IValue(std::int64_t{1}));
    archive.write("target_mean", c10::IValue(ckpt.target_mean));
    archive.write("target_scale", c10::IValue(ckpt.target_scale));
    archive.write("steering_ratio", c10::IValue(ckpt.steering_ratio));
    archive.write("source_resolution", c10::IValue(std::int64_t{ckpt.source_resolution}));
    archive.write("input_height", c10::IValue(std::int64_t{ckpt.cfg.input_height}));
    archive.write("input_width", c10::IValue(std::int64_t{ckpt.cfg.input_width}));
    torch::serialize::OutputArchive weights;
    ckpt.net->save(weights);
    archive.write("model", weights);
    archive.save_to(path.string());
}

PilotCheckpoint load_pilot_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("pilot checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue v;
    if (!archive.try_read("format", v) || !v.isString() || v.toStringRef() != "pilotnet-checkpoint")
        throw ConfigError(path.string() + " is not a PilotNet checkpoint");
    PilotCheckpoint ckpt;
    archive.read("target_mean", v);
    ckpt.target_mean = v.toDouble();
    archive.read("target_scale", v);
    ckpt.target_scale = v.toDouble();
    archive.read("steering_ratio", v);
    ckpt.steering_ratio = v.toDouble();
    archive.read("source_resolution", v);
    ckpt.source_resolution = static_cast<int>(v.toInt());
    archive.read("input_height", v);
    ckpt.cfg.input_height = static_cast<int>(v.toInt());
    archive.read("input_width", v);
    ckpt.cfg.input_width = static_cast<int>(v.toInt());
    ckpt.net = PilotNet(ckpt.cfg);
    torch::serialize::InputArchive weights;
    archive.read("model", weights);
    ckpt.net->load(weights);
    ckpt.net->eval();
    return ckpt;
}

}  // namespace derain
