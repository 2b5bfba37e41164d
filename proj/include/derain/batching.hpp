#pragma once

// Epoch planners for the three batch-composition schemes:
//   STSB  sequential in time, sequential in batch
//   STRB  sequential in time, random in batch
//   RTRB  random in time, random in batch (conventional shuffling)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "derain/dataset.hpp"

namespace derain {

enum class Scheme { stsb, strb, rtrb };

std::string to_string(Scheme s);          // "STSB", ...
Scheme scheme_from_string(const std::string& name);  // case-insensitive

struct SampleRef {
    std::string map_name;
    int frame_index = 0;

    friend auto operator<=>(const SampleRef&, const SampleRef&) = default;
};

struct SequencePair {
    SampleRef first;
    SampleRef second;
};

using Batch = std::vector<SampleRef>;

struct EpochPlan {
    Scheme scheme = Scheme::rtrb;
    std::uint64_t seed = 0;
    std::vector<Batch> batches;

    std::vector<SampleRef> flatten() const;
};

struct SchemeConfig {
    int batch_size = 10;
    std::uint64_t seed = 0;
    // Stride-1 overlapping pairs instead of disjoint (1,2),(3,4). Ablation only; breaks
    // the once-per-epoch coverage guarantee.
    bool sliding_pairs = false;
};

struct PairEnumeration {
    std::vector<SequencePair> pairs;
    std::vector<std::string> warnings;
};

// Positional pairing over the sorted frame list: (p0,p1), (p2,p3), ...
// An odd trailing frame is dropped with a warning.
PairEnumeration enumerate_sequence_pairs(const MapDataset& d, bool sliding = false);

EpochPlan plan_stsb(std::span<const MapDataset> datasets, const SchemeConfig& cfg);
EpochPlan plan_strb(std::span<const MapDataset> datasets, const SchemeConfig& cfg);
EpochPlan plan_rtrb(std::span<const MapDataset> datasets, const SchemeConfig& cfg);
EpochPlan make_plan(Scheme scheme, std::span<const MapDataset> datasets, const SchemeConfig& cfg);

// Line-oriented audit format: header "batch_idx,map_name,frame_index", one ref per row.
void write_plan(std::ostream& out, const EpochPlan& plan);
void write_plan(const std::filesystem::path& path, const EpochPlan& plan);
EpochPlan read_plan(std::istream& in, Scheme scheme = Scheme::rtrb, std::uint64_t seed = 0);
EpochPlan read_plan(const std::filesystem::path& path, Scheme scheme = Scheme::rtrb, std::uint64_t seed = 0);

}  // namespace derain
