#pragma once

// In-memory tensors for one or more maps, preprocessed to the network resolution.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "derain/batching.hpp"
#include "derain/dataset.hpp"
#include "derain/image.hpp"

namespace derain {

// [N,3,H,W] float tensor from images of identical size.
torch::Tensor images_to_tensor(std::span<const Image> images);
std::vector<Image> tensor_to_images(const torch::Tensor& batch);

struct MapFrames {
    std::string name;
    std::vector<int> frames;               // ascending
    std::vector<SteeringRecord> steering;  // may be empty
    torch::Tensor clear;                   // [N,3,R,R]
    torch::Tensor rainy;                   // [N,3,R,R]
};

class FrameStore {
public:
    FrameStore() = default;
    explicit FrameStore(int resolution) : resolution_(resolution) {}

    // Decodes and preprocesses every pair of a dataset.
    void add(const MapDataset& dataset);
    // Frames already in memory (e.g. synthetic maps); images are preprocessed here too.
    void add(const std::string& name, const std::vector<int>& frames, std::span<const Image> clear,
             std::span<const Image> rainy, std::vector<SteeringRecord> steering = {});

    int resolution() const { return resolution_; }
    bool empty() const { return maps_.empty(); }
    std::size_t size() const;  // total frames
    const std::vector<MapFrames>& maps() const { return maps_; }
    const MapFrames& map(const std::string& name) const;

    // Dataset descriptions for the batch planners.
    std::vector<MapDataset> datasets() const;
    std::vector<SampleRef> all_refs() const;

    // Stacked (rainy, clear) tensors for the given references, in order.
    std::pair<torch::Tensor, torch::Tensor> gather(std::span<const SampleRef> refs) const;

private:
    int resolution_ = 0;
    std::vector<MapFrames> maps_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::map<int, std::int64_t>> rows_;
};

// Loads the named maps from a dataset root into a store at the given resolution.
FrameStore load_store(const std::filesystem::path& root, std::span<const std::string> maps, int resolution);

}  // namespace derain
