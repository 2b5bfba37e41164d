#include "derain/model.hpp"

#include <bit>

#include "derain/errors.hpp"

namespace derain {

namespace nn = torch::nn;

void ArchConfig::validate() const {
    if (resolution < 16 || !std::has_single_bit(static_cast<unsigned>(resolution)))
        throw ConfigError("resolution must be a power of two >= 16, got " + std::to_string(resolution));
    if (base_channels < 1 || channel_cap < 1 || latent_channels < 1 || in_channels < 1 || out_channels < 1)
        throw ConfigError("channel widths must be positive");
}

int ArchConfig::stages() const { return std::countr_zero(static_cast<unsigned>(resolution)) - 2; }

int ArchConfig::stage_channels(int stage) const {
    long long c = base_channels;
    for (int i = 0; i < stage && c < channel_cap; ++i) c *= 2;
    return static_cast<int>(std::min<long long>(c, channel_cap));
}

nlohmann::json to_json(const ArchConfig& c) {
    return {{"resolution", c.resolution},       {"base_channels", c.base_channels},
            {"channel_cap", c.channel_cap},     {"latent_channels", c.latent_channels},
            {"in_channels", c.in_channels},     {"out_channels", c.out_channels}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
    ArchConfig c;
    c.resolution = j.value("resolution", c.resolution);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_cap = j.value("channel_cap", c.channel_cap);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    return c;
}

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::conv_transpose: return "conv_transpose";
        case LayerKind::fuse_1x1: return "fuse_1x1";
    }
    return "?";
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

LayerTables build_layer_table(const ArchConfig& cfg) {
    cfg.validate();
    const int n = cfg.stages();
    const int r = cfg.resolution;
    LayerTables t;

    for (int i = 0; i < n; ++i) {
        const bool first = i == 0;
        t.encoder.push_back({LayerKind::conv, first ? cfg.in_channels : cfg.stage_channels(i - 1),
                             cfg.stage_channels(i), 4, 2, 1, !first, first, Activation::relu, r >> i,
                             r >> (i + 1)});
    }
    t.encoder.push_back({LayerKind::conv, cfg.stage_channels(n - 1), cfg.latent_channels, 4, 1, 0, true, false,
                         Activation::sigmoid, 4, 1});

    for (int i = n - 1; i >= 0; --i) {
        const int ch = cfg.stage_channels(i);
        const int spatial = r >> (i + 1);
        if (i == n - 1)
            t.decoder.push_back({LayerKind::conv_transpose, cfg.latent_channels, ch, 4, 1, 0, true, false,
                                 Activation::relu, 1, 4});
        else
            t.decoder.push_back({LayerKind::conv_transpose, cfg.stage_channels(i + 1), ch, 4, 2, 1, true, false,
                                 Activation::relu, spatial / 2, spatial});
        t.decoder.push_back(
            {LayerKind::fuse_1x1, 2 * ch, ch, 1, 1, 0, true, false, Activation::relu, spatial, spatial});
    }
    t.decoder.push_back({LayerKind::conv_transpose, cfg.stage_channels(0), cfg.out_channels, 4, 2, 1, false, true,
                         Activation::tanh, r / 2, r});
    return t;
}

std::int64_t parameter_count(const ArchConfig& cfg) {
    const auto tables = build_layer_table(cfg);
    std::int64_t total = 0;
    for (const auto* table : {&tables.encoder, &tables.decoder})
        for (const auto& l : *table) {
            total += std::int64_t{l.in_channels} * l.out_channels * l.kernel * l.kernel;
            if (l.bias) total += l.out_channels;
            if (l.batch_norm) total += 2 * std::int64_t{l.out_channels};
        }
    return total;
}

namespace {

nn::Sequential make_block(const LayerSpec& l) {
    nn::Sequential seq;
    if (l.kind == LayerKind::conv_transpose)
        seq->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(l.in_channels, l.out_channels, l.kernel)
                                               .stride(l.stride)
                                               .padding(l.padding)
                                               .bias(l.bias)));
    else
        seq->push_back(nn::Conv2d(
            nn::Conv2dOptions(l.in_channels, l.out_channels, l.kernel).stride(l.stride).padding(l.padding).bias(l.bias)));
    if (l.batch_norm) seq->push_back(nn::BatchNorm2d(l.out_channels));
    switch (l.activation) {
        case Activation::relu: seq->push_back(nn::ReLU()); break;
        case Activation::sigmoid: seq->push_back(nn::Sigmoid()); break;
        case Activation::tanh: seq->push_back(nn::Tanh()); break;
    }
    return seq;
}

std::string shape_str(const torch::Tensor& t) {
    std::string s = "[";
    for (std::int64_t i = 0; i < t.dim(); ++i) s += (i ? "," : "") + std::to_string(t.size(i));
    return s + "]";
}

}  // namespace

DerainNetImpl::DerainNetImpl(const ArchConfig& cfg) : cfg_(cfg), tables_(build_layer_table(cfg)) {
    for (std::size_t i = 0; i < tables_.encoder.size(); ++i)
        encoder_.push_back(register_module("enc" + std::to_string(i), make_block(tables_.encoder[i])));
    for (std::size_t i = 0; i + 1 < tables_.decoder.size(); ++i)
        decoder_.push_back(register_module("dec" + std::to_string(i), make_block(tables_.decoder[i])));
    const auto& out = tables_.decoder.back();
    output_ = register_module("out", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(out.in_channels, out.out_channels,
                                                                                     out.kernel)
                                                              .stride(out.stride)
                                                              .padding(out.padding)
                                                              .bias(out.bias)));
}

Encoded DerainNetImpl::encode(const torch::Tensor& images) const {
    const std::int64_t r = cfg_.resolution;
    if (images.dim() != 4 || images.size(1) != cfg_.in_channels || images.size(2) != r || images.size(3) != r)
        throw ShapeError("encode expects [B," + std::to_string(cfg_.in_channels) + "," + std::to_string(r) + "," +
                         std::to_string(r) + "], got " + shape_str(images));
    Encoded out;
    torch::Tensor x = images;
    for (std::size_t i = 0; i + 1 < encoder_.size(); ++i) {
        auto block = encoder_[i];
        x = block->forward(x);
        out.skips.features.push_back(x);
    }
    auto latent = encoder_.back();
    out.latent = latent->forward(x);
    return out;
}

torch::Tensor DerainNetImpl::decode(const torch::Tensor& latent, const SkipBundle& skips) const {
    if (latent.dim() != 4 || latent.size(1) != cfg_.latent_channels || latent.size(2) != 1 || latent.size(3) != 1)
        throw ShapeError("decode expects latent [B," + std::to_string(cfg_.latent_channels) + ",1,1], got " +
                         shape_str(latent));
    const int n = cfg_.stages();
    if (static_cast<int>(skips.features.size()) != n)
        throw ShapeError("decode expects " + std::to_string(n) + " skip features, got " +
                         std::to_string(skips.features.size()));
    torch::Tensor x = latent;
    for (int i = n - 1, k = 0; i >= 0; --i, k += 2) {
        auto up = decoder_[k];
        auto fuse = decoder_[k + 1];
        x = up->forward(x);
        const auto& skip = skips.features[i];
        if (!skip.defined() || skip.dim() != 4 || skip.size(0) != x.size(0) ||
            skip.size(1) != cfg_.stage_channels(i) || skip.size(2) != x.size(2) || skip.size(3) != x.size(3))
            throw ShapeError("skip feature " + std::to_string(i) + " has shape " +
                             (skip.defined() ? shape_str(skip) : std::string("<missing>")) + ", decoder expects [" +
                             std::to_string(x.size(0)) + "," + std::to_string(cfg_.stage_channels(i)) + "," +
                             std::to_string(x.size(2)) + "," + std::to_string(x.size(3)) + "]");
        x = fuse->forward(torch::cat({x, skip}, 1));
    }
    auto output = output_;
    return torch::tanh(output->forward(x));
}

torch::Tensor DerainNetImpl::forward(const torch::Tensor& images) const {
    auto enc = encode(images);
    return (decode(enc.latent, enc.skips) + 1.0) * 0.5;
}

void init_weights(torch::nn::Module& module, std::uint64_t seed) {
    torch::NoGradGuard guard;
    torch::manual_seed(seed);
    for (auto& m : module.modules(/*include_self=*/true)) {
        if (auto* conv = m->as<nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* deconv = m->as<nn::ConvTranspose2d>()) {
            deconv->weight.normal_(0.0, 0.02);
            if (deconv->bias.defined()) deconv->bias.zero_();
        } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
            bn->weight.normal_(1.0, 0.02);
            bn->bias.zero_();
        } else if (auto* fc = m->as<nn::Linear>()) {
            fc->weight.normal_(0.0, 0.02);
            fc->bias.zero_();
        }
    }
}

torch::Tensor derain(DerainNet& net, const torch::Tensor& rainy, int batch_size) {
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    const bool was_training = net->is_training();
    net->eval();
    torch::NoGradGuard guard;
    std::vector<torch::Tensor> parts;
    for (std::int64_t i = 0; i < rainy.size(0); i += batch_size)
        parts.push_back(net->forward(rainy.slice(0, i, std::min<std::int64_t>(rainy.size(0), i + batch_size))));
    net->train(was_training);
    if (parts.empty()) return rainy.new_empty({0, rainy.size(1), rainy.size(2), rainy.size(3)});
    return torch::cat(parts, 0);
}

void save_checkpoint(const std::filesystem::path& path, const DerainCheckpoint& ckpt) {
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
    archive.write("version", c10::IValue(kCheckpointVersion));
    archive.write("arch", c10::IValue(to_json(ckpt.arch).dump()));
    archive.write("step", c10::IValue(ckpt.step));
    archive.write("plan_seed", c10::IValue(std::to_string(ckpt.plan_seed)));
    archive.write("scheme", c10::IValue(ckpt.scheme));
    torch::serialize::OutputArchive weights;
    ckpt.net->save(weights);
    archive.write("model", weights);
    archive.save_to(path.string());
}

DerainCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue v;
    if (!archive.try_read("format", v) || !v.isString() || v.toStringRef() != kCheckpointFormat)
        throw ConfigError(path.string() + " is not a derain checkpoint");
    archive.read("version", v);
    if (v.toInt() != kCheckpointVersion)
        throw ConfigError("unsupported checkpoint version " + std::to_string(v.toInt()));

    DerainCheckpoint ckpt;
    archive.read("arch", v);
    ckpt.arch = arch_from_json(nlohmann::json::parse(v.toStringRef()));
    archive.read("step", v);
    ckpt.step = v.toInt();
    archive.read("plan_seed", v);
    ckpt.plan_seed = std::stoull(v.toStringRef());
    archive.read("scheme", v);
    ckpt.scheme = v.toStringRef();
    ckpt.net = DerainNet(ckpt.arch);
    torch::serialize::InputArchive weights;
    archive.read("model", weights);
    ckpt.net->load(weights);
    return ckpt;
}

DerainNet clone_net(const DerainNet& net) {
    DerainNet copy(net->config());
    torch::NoGradGuard guard;
    auto src_params = net->named_parameters();
    for (auto& p : copy->named_parameters()) p.value().copy_(src_params[p.key()]);
    auto src_buffers = net->named_buffers();
    for (auto& b : copy->named_buffers()) b.value().copy_(src_buffers[b.key()]);
    copy->train(net->is_training());
    return copy;
}

}  // namespace derain
