#include "derain/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "derain/errors.hpp"

namespace fs = std::filesystem;

namespace derain {

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

namespace {

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"scheme", to_string(c.scheme)},
            {"seed", c.seed},
            {"arch", to_json(c.arch)},
            {"checkpoint_every", c.checkpoint_every},
            {"sliding_pairs", c.sliding_pairs},
            {"replay_plans", c.replay_plans.string()}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    if (j.contains("scheme")) c.scheme = scheme_from_string(j["scheme"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("arch")) c.arch = arch_from_json(j["arch"]);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.sliding_pairs = j.value("sliding_pairs", c.sliding_pairs);
    c.replay_plans = j.value("replay_plans", std::string());
    return c;
}

std::string plan_filename(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04d.csv", epoch);
    return buf;
}

double evaluate_mse(const Predictor& predict, const FrameStore& data, int batch_size) {
    if (data.empty() || data.size() == 0) throw EmptyDatasetError("evaluate_mse: empty dataset");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    double sum = 0.0;
    std::int64_t count = 0;
    for (const auto& m : data.maps()) {
        for (std::int64_t i = 0; i < m.rainy.size(0); i += batch_size) {
            const auto end = std::min<std::int64_t>(m.rainy.size(0), i + batch_size);
            const auto pred = predict(m.rainy.slice(0, i, end));
            const auto clear = m.clear.slice(0, i, end);
            if (pred.sizes() != clear.sizes()) throw ShapeError("prediction shape differs from the targets");
            sum += (pred.to(torch::kFloat64) - clear.to(torch::kFloat64)).pow(2).sum().item<double>();
            count += clear.numel();
        }
    }
    return sum / static_cast<double>(count);
}

double evaluate_mse(DerainNet& net, const FrameStore& data, int batch_size) {
    return evaluate_mse([&](const torch::Tensor& x) { return derain(net, x, batch_size); }, data, batch_size);
}

double constant_predictor_mse(const FrameStore& data, double value) {
    if (data.empty()) throw EmptyDatasetError("constant_predictor_mse: empty dataset");
    double sum = 0.0;
    std::int64_t count = 0;
    for (const auto& m : data.maps()) {
        sum += (m.clear.to(torch::kFloat64) - value).pow(2).sum().item<double>();
        count += m.clear.numel();
    }
    return sum / static_cast<double>(count);
}

void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& history) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,split,mse\n";
    char buf[96];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.17g\n", r.epoch, to_string(r.split).c_str(), r.mse);
        out << buf;
    }
}

std::vector<LossRecord> read_loss_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<LossRecord> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto a = line.find(','), b = line.rfind(',');
        if (a == std::string::npos || a == b) throw ParseError(path.string(), line_no, "expected epoch,split,mse");
        try {
            out.push_back({std::stoi(line.substr(0, a)), split_from_string(line.substr(a + 1, b - a - 1)),
                           std::stod(line.substr(b + 1))});
        } catch (const std::invalid_argument&) {
            throw ParseError(path.string(), line_no, "bad number");
        }
    }
    return out;
}

TrainResult train(const TrainConfig& cfg, const FrameStore& train_set, const FrameStore* validation,
                  const FrameStore* test, const TrainOutputs& outputs) {
    cfg.arch.validate();
    if (train_set.empty() || train_set.size() == 0) throw ConfigError("training set is empty");
    if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
    if (train_set.resolution() != cfg.arch.resolution)
        throw ConfigError("training frames are " + std::to_string(train_set.resolution()) + " px but the model expects " +
                          std::to_string(cfg.arch.resolution));

    const bool write = !outputs.dir.empty();
    if (write) fs::create_directories(outputs.dir / "plans");

    DerainNet net(cfg.arch);
    init_weights(*net, cfg.seed);
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate)
                                                  .betas({cfg.adam_beta1, cfg.adam_beta2}));

    const auto datasets = train_set.datasets();
    TrainResult result;
    result.checkpoint.arch = cfg.arch;
    result.checkpoint.plan_seed = cfg.seed;
    result.checkpoint.scheme = to_string(cfg.scheme);
    std::int64_t step = 0;

    const auto snapshot = [&](const fs::path& path) {
        save_checkpoint(path, {cfg.arch, net, step, cfg.seed, to_string(cfg.scheme)});
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochPlan plan;
        if (!cfg.replay_plans.empty())
            plan = read_plan(cfg.replay_plans / plan_filename(epoch), cfg.scheme, cfg.seed + epoch);
        else
            plan = make_plan(cfg.scheme, datasets,
                             {cfg.batch_size, cfg.seed + static_cast<std::uint64_t>(epoch), cfg.sliding_pairs});
        if (write) write_plan(outputs.dir / "plans" / plan_filename(epoch), plan);

        net->train();
        double sum = 0.0;
        std::int64_t seen = 0;
        for (std::size_t b = 0; b < plan.batches.size(); ++b) {
            const auto& batch = plan.batches[b];
            // BatchNorm over the 1x1 latent has no statistics for a single sample.
            if (batch.size() < 2) {
                if (outputs.log_progress)
                    std::cerr << "epoch " << epoch << ": skipping single-sample batch " << b << "\n";
                continue;
            }
            auto [rainy, clear] = train_set.gather(batch);
            auto loss = torch::mse_loss(net->forward(rainy), clear);
            const double value = loss.item<double>();
            if (!std::isfinite(value))
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(b));
            opt.zero_grad();
            loss.backward();
            opt.step();
            ++step;
            sum += value * static_cast<double>(batch.size());
            seen += static_cast<std::int64_t>(batch.size());
        }
        const double train_mse = seen > 0 ? sum / static_cast<double>(seen) : 0.0;
        result.history.push_back({epoch, Split::train, train_mse});

        std::string line = "epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.epochs) +
                           " train " + std::to_string(train_mse);
        if (validation && !validation->empty()) {
            const double v = evaluate_mse(net, *validation, cfg.batch_size);
            result.history.push_back({epoch, Split::validation, v});
            line += " validation " + std::to_string(v);
        }
        if (test && !test->empty()) {
            const double v = evaluate_mse(net, *test, cfg.batch_size);
            result.history.push_back({epoch, Split::test, v});
            line += " test " + std::to_string(v);
        }
        if (outputs.log_progress) std::cerr << line << "\n";

        if (write) {
            write_loss_csv(outputs.dir / "loss.csv", result.history);
            if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs) {
                char name[48];
                std::snprintf(name, sizeof name, "checkpoint_epoch_%04d.pt", epoch);
                snapshot(outputs.dir / name);
            }
        }
    }

    net->eval();
    result.checkpoint.net = net;
    result.checkpoint.step = step;
    if (write) {
        write_loss_csv(outputs.dir / "loss.csv", result.history);
        snapshot(outputs.dir / "checkpoint.pt");
    }
    return result;
}

std::vector<fs::path> dump_comparisons(DerainNet& net, const FrameStore& data, const std::string& map_name,
                                       const std::vector<int>& frames, const fs::path& out_dir,
                                       const DumpOptions& options) {
    data.map(map_name);  // throws for unknown maps
    fs::create_directories(out_dir);
    std::vector<Image> rows;
    std::vector<fs::path> written;
    for (int f : frames) {
        const SampleRef ref{map_name, f};
        auto [rainy, clear] = data.gather(std::span(&ref, 1));
        const auto derained = derain(net, rainy, 1);
        std::vector<Image> panel = {tensor_to_images(rainy)[0], tensor_to_images(clear)[0],
                                    tensor_to_images(derained)[0]};
        if (!options.baseline_dir.empty()) {
            const fs::path p = options.baseline_dir / frame_filename(f);
            if (fs::exists(p))
                panel.push_back(preprocess(read_png(p), data.resolution()));
            else
                std::cerr << "warning: no baseline frame " << p << "; panel omitted\n";
        }
        Image row = hconcat(panel);
        if (options.strip) {
            if (!rows.empty() && rows.front().width != row.width)
                throw IntegrityError("strip rows differ in width (baseline missing for some frames)");
            rows.push_back(std::move(row));
        } else {
            const fs::path path = out_dir / ("compare_" + frame_filename(f));
            write_png(path, row);
            written.push_back(path);
        }
    }
    if (options.strip && !rows.empty()) {
        const fs::path path = out_dir / ("strip_" + frame_filename(frames.front()));
        write_png(path, vconcat(rows));
        written.push_back(path);
    }
    return written;
}

}  // namespace derain
