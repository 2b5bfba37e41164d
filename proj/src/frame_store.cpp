#include "derain/frame_store.hpp"

#include <iostream>

#include "derain/errors.hpp"

namespace derain {

torch::Tensor images_to_tensor(std::span<const Image> images) {
    if (images.empty()) return torch::empty({0, 3, 0, 0});
    const int h = images.front().height, w = images.front().width;
    auto out = torch::empty({static_cast<std::int64_t>(images.size()), 3, h, w}, torch::kFloat32);
    auto acc = out.accessor<float, 4>();
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& im = images[n];
        if (im.height != h || im.width != w) throw ShapeError("images_to_tensor: mixed image sizes");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) acc[n][c][y][x] = im.at(y, x, c);
    }
    return out;
}

std::vector<Image> tensor_to_images(const torch::Tensor& batch) {
    if (batch.dim() != 4 || batch.size(1) != 3) throw ShapeError("tensor_to_images expects [N,3,H,W]");
    const auto t = batch.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    auto acc = t.accessor<float, 4>();
    std::vector<Image> out;
    for (std::int64_t n = 0; n < t.size(0); ++n) {
        Image im(static_cast<int>(t.size(2)), static_cast<int>(t.size(3)));
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x)
                for (int c = 0; c < 3; ++c) im.at(y, x, c) = acc[n][c][y][x];
        out.push_back(std::move(im));
    }
    return out;
}

std::size_t FrameStore::size() const {
    std::size_t n = 0;
    for (const auto& m : maps_) n += m.frames.size();
    return n;
}

const MapFrames& FrameStore::map(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("map '" + name + "' not loaded");
    return maps_[it->second];
}

void FrameStore::add(const MapDataset& dataset) {
    std::vector<Image> clear, rainy;
    std::vector<int> frames;
    for (const auto& p : dataset.pairs) {
        Image c = read_png(p.clear_path);
        Image r = read_png(p.rainy_path);
        if (!c.same_shape(r))
            throw IntegrityError("frame " + std::to_string(p.frame_index) + " of map '" + dataset.map_name +
                                 "': clear and rainy sizes differ");
        clear.push_back(std::move(c));
        rainy.push_back(std::move(r));
        frames.push_back(p.frame_index);
    }
    add(dataset.map_name, frames, clear, rainy, dataset.steering);
}

void FrameStore::add(const std::string& name, const std::vector<int>& frames, std::span<const Image> clear,
                     std::span<const Image> rainy, std::vector<SteeringRecord> steering) {
    if (resolution_ < 1) throw ConfigError("FrameStore needs a positive resolution");
    if (frames.size() != clear.size() || frames.size() != rainy.size())
        throw IntegrityError("map '" + name + "': frame/image counts differ");
    if (frames.empty()) throw EmptyDatasetError("map '" + name + "' has no frames");
    if (index_.contains(name)) throw IntegrityError("map '" + name + "' added twice");

    MapFrames m;
    m.name = name;
    m.frames = frames;
    m.steering = std::move(steering);
    std::vector<Image> c, r;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (i > 0 && frames[i] <= frames[i - 1]) throw IntegrityError("map '" + name + "': frames not ascending");
        c.push_back(preprocess(clear[i], resolution_));
        r.push_back(preprocess(rainy[i], resolution_));
    }
    m.clear = images_to_tensor(c);
    m.rainy = images_to_tensor(r);

    auto& rows = rows_[name];
    for (std::size_t i = 0; i < frames.size(); ++i) rows[frames[i]] = static_cast<std::int64_t>(i);
    index_[name] = maps_.size();
    maps_.push_back(std::move(m));
}

std::vector<MapDataset> FrameStore::datasets() const {
    std::vector<MapDataset> out;
    for (const auto& m : maps_) {
        out.push_back(in_memory_dataset(m.name, m.frames));
        out.back().steering = m.steering;
    }
    return out;
}

std::vector<SampleRef> FrameStore::all_refs() const {
    std::vector<SampleRef> refs;
    for (const auto& m : maps_)
        for (int f : m.frames) refs.push_back({m.name, f});
    return refs;
}

std::pair<torch::Tensor, torch::Tensor> FrameStore::gather(std::span<const SampleRef> refs) const {
    std::vector<torch::Tensor> rainy, clear;
    rainy.reserve(refs.size());
    clear.reserve(refs.size());
    for (const auto& ref : refs) {
        const auto& m = map(ref.map_name);
        const auto& rows = rows_.at(ref.map_name);
        auto it = rows.find(ref.frame_index);
        if (it == rows.end())
            throw IndexError("frame " + std::to_string(ref.frame_index) + " not in map '" + ref.map_name + "'");
        rainy.push_back(m.rainy[it->second]);
        clear.push_back(m.clear[it->second]);
    }
    return {torch::stack(rainy), torch::stack(clear)};
}

FrameStore load_store(const std::filesystem::path& root, std::span<const std::string> maps, int resolution) {
    FrameStore store(resolution);
    for (const auto& name : maps) {
        const auto ds = load_map_dataset(root, name);
        for (const auto& w : ds.warnings) std::cerr << "warning: " << name << ": " << w << "\n";
        store.add(ds);
    }
    return store;
}

}  // namespace derain
