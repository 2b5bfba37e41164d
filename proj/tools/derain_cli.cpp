// derain: command-line driver for synthesis, training, evaluation and steering reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "derain/commands.hpp"
#include "derain/errors.hpp"
#include "derain/manifest.hpp"

using nlohmann::json;
using namespace derain;

namespace {

// Binds flags to JSON pointers in a command config so that a --config file
// provides the base values and explicitly given flags override them.
class Binder {
public:
    explicit Binder(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "JSON config file; flags override its values");
    }

    template <class T>
    CLI::Option* option(const std::string& flags, const std::string& pointer, const std::string& desc) {
        auto value = std::make_shared<T>();
        auto* opt = app_->add_option(flags, *value, desc);
        apply_.push_back([opt, value, pointer](json& j) {
            if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
        });
        return opt;
    }

    CLI::Option* flag(const std::string& flags, const std::string& pointer, const std::string& desc) {
        auto value = std::make_shared<bool>(false);
        auto* opt = app_->add_flag(flags, *value, desc);
        apply_.push_back([opt, value, pointer](json& j) {
            if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
        });
        return opt;
    }

    json resolve(json base) const {
        if (!config_path_.empty()) base.merge_patch(read_json(config_path_));
        for (const auto& f : apply_) f(base);
        return base;
    }

    CLI::App* app() const { return app_; }

private:
    CLI::App* app_;
    std::string config_path_;
    std::vector<std::function<void(json&)>> apply_;
};

const std::vector<std::string> kSchemes{"stsb", "strb", "rtrb"};
const std::vector<std::string> kSplits{"train", "validation", "test"};

void print_report(const SteeringReport& r) {
    std::printf("%-12s %10s %10s\n", "condition", "mae_deg", "r2_vs_clear");
    for (const auto& c : r.conditions) {
        const auto& reg = r.regression_vs_clear.at(c);
        std::printf("%-12s %10.4f %10.4f\n", c.c_str(), r.mae.at(c), reg.degenerate() ? std::nan("") : reg.r_squared);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rain-streak removal for sequential driving frames"};
    app.require_subcommand(1);

    auto* synth_cmd = app.add_subcommand("synth", "Generate paired clear/rainy synthetic maps");
    Binder synth_b(synth_cmd);
    synth_b.option<std::string>("--out,-o", "/out", "Output dataset root");
    synth_b.flag("--force", "/force", "Overwrite a non-empty output directory");
    synth_b.option<std::uint64_t>("--seed", "/seed", "Base seed");
    synth_b.option<int>("--resolution", "/resolution", "Square frame size in pixels");
    synth_b.option<int>("--frames", "/n_frames", "Frames per map");
    synth_b.option<std::string>("--rain", "/rain_preset", "Rain preset")->check(CLI::IsMember({"heavy", "light"}));
    synth_b.flag("--light-variant,!--no-light-variant", "/light_variant", "Also render test maps in light rain");

    auto* train_cmd = app.add_subcommand("train", "Train the deraining network");
    Binder train_b(train_cmd);
    train_b.option<std::string>("--data,-d", "/data", "Dataset root");
    train_b.option<std::string>("--out,-o", "/out", "Run directory");
    train_b.option<std::string>("--scheme", "/train/scheme", "Batching scheme")
        ->check(CLI::IsMember(kSchemes, CLI::ignore_case));
    train_b.option<int>("--epochs", "/train/epochs", "Epochs");
    train_b.option<int>("--batch-size", "/train/batch_size", "Batch size");
    train_b.option<double>("--lr", "/train/learning_rate", "Adam learning rate");
    train_b.option<double>("--beta1", "/train/adam_beta1", "Adam beta1");
    train_b.option<double>("--beta2", "/train/adam_beta2", "Adam beta2");
    train_b.option<std::uint64_t>("--seed", "/train/seed", "Seed for weights and epoch plans");
    train_b.option<int>("--resolution", "/train/arch/resolution", "Network resolution (power of two)");
    train_b.option<int>("--base-channels", "/train/arch/base_channels", "Channels of the first stage");
    train_b.option<int>("--channel-cap", "/train/arch/channel_cap", "Channel cap");
    train_b.option<int>("--latent-channels", "/train/arch/latent_channels", "Latent width");
    train_b.option<int>("--checkpoint-every", "/train/checkpoint_every", "Epochs between checkpoints (0: final only)");
    train_b.flag("--sliding-pairs", "/train/sliding_pairs", "Overlapping sequence pairs (ablation)");
    train_b.option<std::string>("--replay-plans", "/train/replay_plans", "Directory of epoch plans to replay");
    train_b.option<std::vector<std::string>>("--train-maps", "/train_maps", "Training maps")->delimiter(',');
    train_b.option<std::vector<std::string>>("--validation-maps", "/validation_maps", "Validation maps")
        ->delimiter(',');
    train_b.option<std::vector<std::string>>("--test-maps", "/test_maps", "Test maps")->delimiter(',');

    auto* derain_cmd = app.add_subcommand("derain", "Derain a PNG file or directory");
    Binder derain_b(derain_cmd);
    derain_b.option<std::string>("--checkpoint,-c", "/checkpoint", "Derain checkpoint");
    derain_b.option<std::string>("--input,-i", "/input", "PNG file or directory");
    derain_b.option<std::string>("--out,-o", "/out", "Output directory");
    derain_b.flag("--preprocess", "/preprocess", "Centre-crop and resize inputs to the checkpoint resolution");
    derain_b.option<int>("--batch-size", "/batch_size", "Inference batch size");

    auto* eval_cmd = app.add_subcommand("eval", "Mean squared error of a checkpoint on one split");
    Binder eval_b(eval_cmd);
    eval_b.option<std::string>("--checkpoint,-c", "/checkpoint", "Derain checkpoint");
    eval_b.option<std::string>("--data,-d", "/data", "Dataset root");
    eval_b.option<std::string>("--split", "/split", "Split")->check(CLI::IsMember(kSplits));
    eval_b.option<std::vector<std::string>>("--maps", "/maps", "Explicit maps instead of a split")->delimiter(',');
    eval_b.option<int>("--batch-size", "/batch_size", "Evaluation batch size");
    eval_b.option<std::string>("--out,-o", "/out", "Directory for eval.csv and the manifest");

    auto* pilot_cmd = app.add_subcommand("train-pilot", "Train the steering model on clear frames");
    Binder pilot_b(pilot_cmd);
    pilot_b.option<std::string>("--data,-d", "/data", "Dataset root");
    pilot_b.option<std::vector<std::string>>("--maps", "/maps", "Maps (default: training split)")->delimiter(',');
    pilot_b.option<int>("--resolution", "/resolution", "Square frame size the inputs are cut from");
    pilot_b.option<double>("--ratio", "/steering_ratio", "Steering ratio");
    pilot_b.option<int>("--epochs", "/epochs", "Epochs");
    pilot_b.option<int>("--batch-size", "/batch_size", "Batch size");
    pilot_b.option<double>("--lr", "/learning_rate", "Adam learning rate");
    pilot_b.option<std::uint64_t>("--seed", "/seed", "Seed");
    pilot_b.option<std::string>("--out,-o", "/out", "Output directory");

    auto* steer_cmd = app.add_subcommand("steer", "Steering report for clear, rainy and derained frames");
    Binder steer_b(steer_cmd);
    steer_b.option<std::string>("--pilot-checkpoint", "/pilot_checkpoint", "Steering model checkpoint");
    steer_b.option<std::string>("--derain-checkpoint", "/derain_checkpoint", "Derain checkpoint");
    steer_b.option<std::string>("--data,-d", "/data", "Dataset root");
    steer_b.option<std::string>("--map", "/map", "Map to evaluate (default: first test map)");
    steer_b.option<std::string>("--light-data", "/light_data", "Root holding the light-rain copy of the map");
    steer_b.option<std::string>("--exclude", "/exclude", "Frame ranges to leave out, e.g. 40-60,120-130");
    steer_b.option<double>("--ratio", "/steering_ratio", "Steering ratio (default: the pilot's)");
    steer_b.option<std::string>("--out,-o", "/out", "Report directory");

    auto* dump_cmd = app.add_subcommand("dump", "Side-by-side comparison panels");
    Binder dump_b(dump_cmd);
    dump_b.option<std::string>("--checkpoint,-c", "/checkpoint", "Derain checkpoint");
    dump_b.option<std::string>("--data,-d", "/data", "Dataset root");
    dump_b.option<std::string>("--map", "/map", "Map");
    dump_b.option<std::vector<int>>("--frames", "/frames", "Frame indices")->delimiter(',');
    dump_b.option<std::string>("--baseline", "/baseline", "External derainer output directory");
    dump_b.flag("--strip", "/strip", "Stack the frames into one strip image");
    dump_b.option<std::string>("--out,-o", "/out", "Output directory");

    auto* rerun_cmd = app.add_subcommand("rerun", "Replay a command from its manifest");
    std::string manifest_path, rerun_out;
    rerun_cmd->add_option("manifest", manifest_path, "manifest.json or the directory holding it")->required();
    rerun_cmd->add_option("--out,-o", rerun_out, "Write outputs here instead of the recorded directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    configure_runtime();
    try {
        if (*synth_cmd) {
            run_synth(synth_config_from_json(synth_b.resolve(to_json(default_synth_config()))));
        } else if (*train_cmd) {
            auto cfg = train_command_from_json(train_b.resolve(to_json(TrainCommandConfig{})));
            const auto result = run_train(cfg);
            std::cout << "trained " << result.checkpoint.step << " steps; outputs in " << cfg.out << "\n";
        } else if (*derain_cmd) {
            const auto n = run_derain(derain_command_from_json(derain_b.resolve(to_json(DerainCommandConfig{}))));
            std::cout << "derained " << n << " images\n";
        } else if (*eval_cmd) {
            const auto cfg = eval_config_from_json(eval_b.resolve(to_json(EvalConfig{})));
            std::printf("%.10g\n", run_eval(cfg));
        } else if (*pilot_cmd) {
            const auto result = run_train_pilot(pilot_command_from_json(pilot_b.resolve(to_json(PilotCommandConfig{}))));
            if (!result.loss_history.empty())
                std::printf("final training mse %.6g deg^2\n", result.loss_history.back());
        } else if (*steer_cmd) {
            print_report(run_steer(steer_command_from_json(steer_b.resolve(to_json(SteerCommandConfig{})))));
        } else if (*dump_cmd) {
            const auto files = run_dump(dump_command_from_json(dump_b.resolve(to_json(DumpCommandConfig{}))));
            std::cout << "wrote " << files.size() << " files\n";
        } else if (*rerun_cmd) {
            rerun(manifest_path, rerun_out);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
