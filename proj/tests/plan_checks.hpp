#pragma once

// Independent checks of epoch plans against the scheme definitions, plus a random
// dataset-shape generator. Shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "derain/batching.hpp"

namespace derain {

inline std::ostream& operator<<(std::ostream& os, const SampleRef& r) { return os << r.map_name << '#' << r.frame_index; }

}  // namespace derain

namespace testing {

struct PlanCase {
    std::vector<derain::MapDataset> datasets;
    derain::SchemeConfig cfg;
    derain::Scheme scheme = derain::Scheme::rtrb;
};

inline derain::MapDataset frames_dataset(const std::string& name, const std::vector<int>& frames) {
    return derain::in_memory_dataset(name, frames);
}

// 1-6 maps in random declaration order, 0-41 frames each with random gaps, half of
// the cases with equal map lengths.
inline PlanCase random_plan_case(std::mt19937_64& gen) {
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(gen() % static_cast<std::uint64_t>(hi - lo + 1)); };
    PlanCase c;
    c.scheme = static_cast<derain::Scheme>(pick(0, 2));
    const int n_maps = pick(1, 6);
    const bool equal = pick(0, 1) == 1;
    const int shared_len = pick(1, 41);
    std::vector<std::string> names;
    for (int m = 0; m < n_maps; ++m) names.push_back("map_" + std::string(1, static_cast<char>('a' + m)));
    std::shuffle(names.begin(), names.end(), gen);
    bool any_pair = false;
    for (const auto& name : names) {
        const int len = equal ? shared_len : pick(0, 41);
        std::vector<int> frames;
        int f = pick(0, 5);
        for (int i = 0; i < len; ++i) {
            frames.push_back(f);
            f += pick(0, 3) == 0 ? pick(2, 4) : 1;
        }
        any_pair = any_pair || len >= 2;
        c.datasets.push_back(frames_dataset(name, frames));
    }
    if (!any_pair) c.datasets.front() = frames_dataset(c.datasets.front().map_name, {0, 1, 2});
    c.cfg.seed = gen();
    c.cfg.batch_size = c.scheme == derain::Scheme::rtrb ? pick(1, 16) : 2 * pick(1, 8);
    return c;
}

inline std::vector<derain::SampleRef> expected_refs(const PlanCase& c) {
    std::vector<derain::SampleRef> out;
    for (const auto& d : c.datasets) {
        std::size_t n = d.pairs.size();
        if (c.scheme != derain::Scheme::rtrb) n -= n % 2;  // trailing odd frame has no partner
        for (std::size_t i = 0; i < n; ++i) out.push_back({d.map_name, d.pairs[i].frame_index});
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Empty string when the check passes, otherwise what went wrong.
inline std::string check_coverage(const PlanCase& c, const derain::EpochPlan& plan) {
    auto got = plan.flatten();
    std::sort(got.begin(), got.end());
    if (got != expected_refs(c)) return "flattened plan is not the expected multiset of samples";
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        const auto size = static_cast<int>(plan.batches[b].size());
        const bool last = b + 1 == plan.batches.size();
        if (size == 0 || size > c.cfg.batch_size || (!last && size != c.cfg.batch_size))
            return "batch " + std::to_string(b) + " has " + std::to_string(size) + " samples";
    }
    return {};
}

// Position of each frame in its map's sorted frame list.
inline std::map<derain::SampleRef, std::size_t> positions(const PlanCase& c) {
    std::map<derain::SampleRef, std::size_t> pos;
    for (const auto& d : c.datasets)
        for (std::size_t i = 0; i < d.pairs.size(); ++i) pos[{d.map_name, d.pairs[i].frame_index}] = i;
    return pos;
}

inline std::string check_adjacency(const PlanCase& c, const derain::EpochPlan& plan) {
    const auto pos = positions(c);
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        const auto& batch = plan.batches[b];
        if (batch.size() % 2 != 0) return "batch " + std::to_string(b) + " has an odd sample count";
        for (std::size_t i = 0; i < batch.size(); i += 2) {
            const auto& first = batch[i];
            const auto& second = batch[i + 1];
            if (first.map_name != second.map_name) return "pair mixes maps in batch " + std::to_string(b);
            const auto p1 = pos.at(first), p2 = pos.at(second);
            if (p1 % 2 != 0 || p2 != p1 + 1)
                return "batch " + std::to_string(b) + " slot " + std::to_string(i / 2) + " is not a sequence pair";
        }
    }
    return {};
}

// Slot k of the flattened pair sequence belongs to map (k mod M) in lexicographic
// order while that map has pairs left; each map's pairs are consumed in order.
inline std::string check_stsb_slots(const PlanCase& c, const derain::EpochPlan& plan) {
    std::vector<const derain::MapDataset*> maps;
    for (const auto& d : c.datasets) maps.push_back(&d);
    std::sort(maps.begin(), maps.end(), [](auto* a, auto* b) { return a->map_name < b->map_name; });
    std::map<std::string, std::size_t> total, taken;
    for (const auto* m : maps) total[m->map_name] = m->pairs.size() / 2;
    const auto flat = plan.flatten();
    const auto pos = positions(c);
    for (std::size_t k = 0; 2 * k < flat.size(); ++k) {
        const auto& ref = flat[2 * k];
        const auto& scheduled = maps[k % maps.size()]->map_name;
        if (taken[scheduled] < total[scheduled] && ref.map_name != scheduled)
            return "slot " + std::to_string(k) + " holds " + ref.map_name + " instead of " + scheduled;
        if (pos.at(ref) != 2 * taken[ref.map_name]) return "map " + ref.map_name + " pairs out of order";
        ++taken[ref.map_name];
    }
    return {};
}

// Monte-Carlo oracle: fraction of STRB batches holding two or more pairs of one map,
// drawn by dealing map labels with std::shuffle.
inline double strb_same_map_fraction_oracle(int maps, int pairs_per_map, int batch_size, int epochs,
                                            std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<int> labels;
    for (int m = 0; m < maps; ++m) labels.insert(labels.end(), static_cast<std::size_t>(pairs_per_map), m);
    const std::size_t per = static_cast<std::size_t>(batch_size / 2);
    std::size_t hits = 0, batches = 0;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(labels.begin(), labels.end(), gen);
        for (std::size_t i = 0; i < labels.size(); i += per) {
            std::vector<int> count(static_cast<std::size_t>(maps), 0);
            bool hit = false;
            for (std::size_t j = i; j < std::min(labels.size(), i + per); ++j)
                hit = hit || ++count[static_cast<std::size_t>(labels[j])] >= 2;
            hits += hit;
            ++batches;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(batches);
}

// Monte-Carlo oracle: probability that a random batch of frames contains two
// temporally adjacent frames of the same map.
inline double rtrb_adjacent_fraction_oracle(int maps, int frames_per_map, int batch_size, int epochs,
                                            std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<std::pair<int, int>> refs;
    for (int m = 0; m < maps; ++m)
        for (int f = 0; f < frames_per_map; ++f) refs.emplace_back(m, f);
    std::size_t hits = 0, batches = 0;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(refs.begin(), refs.end(), gen);
        for (std::size_t i = 0; i + static_cast<std::size_t>(batch_size) <= refs.size(); i += static_cast<std::size_t>(batch_size)) {
            std::vector<std::pair<int, int>> b(refs.begin() + static_cast<std::ptrdiff_t>(i),
                                               refs.begin() + static_cast<std::ptrdiff_t>(i) + batch_size);
            std::sort(b.begin(), b.end());
            bool hit = false;
            for (std::size_t j = 1; j < b.size(); ++j) hit = hit || (b[j].first == b[j - 1].first && b[j].second == b[j - 1].second + 1);
            hits += hit;
            ++batches;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(batches);
}

inline bool batch_has_adjacent(const derain::Batch& batch, const std::map<derain::SampleRef, std::size_t>& pos) {
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (std::size_t j = 0; j < batch.size(); ++j)
            if (i != j && batch[i].map_name == batch[j].map_name && pos.at(batch[j]) == pos.at(batch[i]) + 1) return true;
    return false;
}

inline bool batch_has_repeated_map(const derain::Batch& batch) {
    std::map<std::string, int> count;
    for (std::size_t i = 0; i < batch.size(); i += 2)
        if (++count[batch[i].map_name] >= 2) return true;
    return false;
}

inline std::vector<derain::MapDataset> uniform_maps(int maps, int frames) {
    std::vector<derain::MapDataset> out;
    for (int m = 0; m < maps; ++m) {
        std::vector<int> f(static_cast<std::size_t>(frames));
        for (int i = 0; i < frames; ++i) f[static_cast<std::size_t>(i)] = i;
        out.push_back(frames_dataset("town" + std::to_string(m), f));
    }
    return out;
}

}  // namespace testing
