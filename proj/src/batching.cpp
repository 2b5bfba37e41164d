#include "derain/batching.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "derain/errors.hpp"
#include "derain/rng.hpp"

namespace derain {

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::stsb: return "STSB";
        case Scheme::strb: return "STRB";
        case Scheme::rtrb: return "RTRB";
    }
    return "RTRB";
}

Scheme scheme_from_string(const std::string& name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "stsb") return Scheme::stsb;
    if (lower == "strb") return Scheme::strb;
    if (lower == "rtrb") return Scheme::rtrb;
    throw ConfigError("unknown batching scheme '" + name + "' (expected stsb, strb or rtrb)");
}

std::vector<SampleRef> EpochPlan::flatten() const {
    std::vector<SampleRef> out;
    for (const auto& b : batches) out.insert(out.end(), b.begin(), b.end());
    return out;
}

PairEnumeration enumerate_sequence_pairs(const MapDataset& d, bool sliding) {
    PairEnumeration result;
    const auto& p = d.pairs;
    const std::size_t stride = sliding ? 1 : 2;
    for (std::size_t i = 0; i + 1 < p.size(); i += stride)
        result.pairs.push_back({{d.map_name, p[i].frame_index}, {d.map_name, p[i + 1].frame_index}});
    if (!sliding && p.size() % 2 == 1)
        result.warnings.push_back("map '" + d.map_name + "': frame " + std::to_string(p.back().frame_index) +
                                  " has no successor and is left out of sequence pairs");
    return result;
}

namespace {

void require_even(const SchemeConfig& cfg) {
    if (cfg.batch_size < 2 || cfg.batch_size % 2 != 0)
        throw ConfigError("sequence-pair schemes need a positive even batch size, got " +
                          std::to_string(cfg.batch_size));
}

// Datasets visited in lexicographic map order.
std::vector<const MapDataset*> sorted_maps(std::span<const MapDataset> datasets) {
    std::vector<const MapDataset*> maps;
    for (const auto& d : datasets) maps.push_back(&d);
    std::stable_sort(maps.begin(), maps.end(), [](auto* a, auto* b) { return a->map_name < b->map_name; });
    for (std::size_t i = 1; i < maps.size(); ++i)
        if (maps[i]->map_name == maps[i - 1]->map_name)
            throw IntegrityError("map '" + maps[i]->map_name + "' listed twice");
    return maps;
}

template <class T>
std::vector<Batch> chunk(const std::vector<T>& items, std::size_t per_batch, auto&& append) {
    std::vector<Batch> batches;
    for (std::size_t i = 0; i < items.size(); i += per_batch) {
        Batch b;
        for (std::size_t j = i; j < std::min(items.size(), i + per_batch); ++j) append(b, items[j]);
        batches.push_back(std::move(b));
    }
    return batches;
}

void append_pair(Batch& b, const SequencePair& p) {
    b.push_back(p.first);
    b.push_back(p.second);
}

}  // namespace

EpochPlan plan_stsb(std::span<const MapDataset> datasets, const SchemeConfig& cfg) {
    require_even(cfg);
    const auto maps = sorted_maps(datasets);
    std::vector<std::vector<SequencePair>> per_map;
    std::size_t total = 0;
    for (const auto* m : maps) {
        per_map.push_back(enumerate_sequence_pairs(*m, cfg.sliding_pairs).pairs);
        total += per_map.back().size();
    }
    if (total == 0) throw EmptyDatasetError("STSB needs at least one sequence pair");

    Rng rng(cfg.seed);
    std::vector<std::size_t> cursor(maps.size(), 0);
    std::vector<SequencePair> order;
    order.reserve(total);
    // Slots cycle through the maps in fixed order; an exhausted map's slot goes to a
    // uniformly chosen map that still has pairs.
    for (std::size_t slot = 0; order.size() < total; ++slot) {
        std::size_t m = slot % maps.size();
        if (cursor[m] == per_map[m].size()) {
            std::vector<std::size_t> open;
            for (std::size_t k = 0; k < maps.size(); ++k)
                if (cursor[k] < per_map[k].size()) open.push_back(k);
            m = open[rng.below(open.size())];
        }
        order.push_back(per_map[m][cursor[m]++]);
    }

    EpochPlan plan{Scheme::stsb, cfg.seed, {}};
    plan.batches = chunk(order, static_cast<std::size_t>(cfg.batch_size / 2), append_pair);
    return plan;
}

EpochPlan plan_strb(std::span<const MapDataset> datasets, const SchemeConfig& cfg) {
    require_even(cfg);
    std::vector<SequencePair> pool;
    for (const auto* m : sorted_maps(datasets)) {
        auto pairs = enumerate_sequence_pairs(*m, cfg.sliding_pairs).pairs;
        pool.insert(pool.end(), pairs.begin(), pairs.end());
    }
    if (pool.empty()) throw EmptyDatasetError("STRB needs at least one sequence pair");
    Rng rng(cfg.seed);
    rng.shuffle(std::span(pool));

    EpochPlan plan{Scheme::strb, cfg.seed, {}};
    plan.batches = chunk(pool, static_cast<std::size_t>(cfg.batch_size / 2), append_pair);
    return plan;
}

EpochPlan plan_rtrb(std::span<const MapDataset> datasets, const SchemeConfig& cfg) {
    if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
    std::vector<SampleRef> pool;
    for (const auto* m : sorted_maps(datasets))
        for (const auto& p : m->pairs) pool.push_back({m->map_name, p.frame_index});
    if (pool.empty()) throw EmptyDatasetError("RTRB needs at least one sample");
    Rng rng(cfg.seed);
    rng.shuffle(std::span(pool));

    EpochPlan plan{Scheme::rtrb, cfg.seed, {}};
    plan.batches = chunk(pool, static_cast<std::size_t>(cfg.batch_size),
                         [](Batch& b, const SampleRef& r) { b.push_back(r); });
    return plan;
}

EpochPlan make_plan(Scheme scheme, std::span<const MapDataset> datasets, const SchemeConfig& cfg) {
    switch (scheme) {
        case Scheme::stsb: return plan_stsb(datasets, cfg);
        case Scheme::strb: return plan_strb(datasets, cfg);
        case Scheme::rtrb: return plan_rtrb(datasets, cfg);
    }
    throw ConfigError("unknown scheme");
}

void write_plan(std::ostream& out, const EpochPlan& plan) {
    out << "batch_idx,map_name,frame_index\n";
    for (std::size_t b = 0; b < plan.batches.size(); ++b)
        for (const auto& r : plan.batches[b]) out << b << ',' << r.map_name << ',' << r.frame_index << '\n';
}

void write_plan(const std::filesystem::path& path, const EpochPlan& plan) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_plan(out, plan);
}

EpochPlan read_plan(std::istream& in, Scheme scheme, std::uint64_t seed) {
    EpochPlan plan{scheme, seed, {}};
    std::string line;
    if (!std::getline(in, line) || line != "batch_idx,map_name,frame_index")
        throw ParseError("plan", 1, "expected header 'batch_idx,map_name,frame_index'");
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.rfind(',');
        if (c1 == std::string::npos || c1 == c2) throw ParseError("plan", line_no, "expected three columns");
        std::size_t batch = 0;
        SampleRef ref;
        try {
            batch = std::stoul(line.substr(0, c1));
            ref.frame_index = std::stoi(line.substr(c2 + 1));
        } catch (const std::exception&) {
            throw ParseError("plan", line_no, "non-numeric field");
        }
        ref.map_name = line.substr(c1 + 1, c2 - c1 - 1);
        if (batch != plan.batches.size() && batch + 1 != plan.batches.size())
            throw ParseError("plan", line_no, "batch indices must be consecutive");
        if (batch == plan.batches.size()) plan.batches.emplace_back();
        plan.batches.back().push_back(std::move(ref));
    }
    return plan;
}

EpochPlan read_plan(const std::filesystem::path& path, Scheme scheme, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    return read_plan(in, scheme, seed);
}

}  // namespace derain
