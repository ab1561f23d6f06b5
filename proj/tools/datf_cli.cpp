// Command-line front end: train, eval, ablate, gradcheck, inspect,
// export-attention, bench. See README for config format and outputs.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "datf/harness.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> values;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        values.push_back(std::stoi(token));
    }
    return values;
}

datf::ExperimentConfig load_config_with_overrides(const std::string& config_path,
                                                  const std::int64_t* seed_override,
                                                  const std::string& out_override) {
    datf::ExperimentConfig cfg = datf::load_experiment_config(config_path);
    if (seed_override) cfg.seed = static_cast<std::uint64_t>(*seed_override);
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distance-aware transformer experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, axis, tokens_arg;
    std::string n_list = "16,32,64,128";
    std::int64_t seed = -1;
    bool seed_set = false;
    int seeds = 5;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* train = app.add_subcommand("train", "train a model and write report + checkpoint");
    train->add_option("--config", config_path, "experiment config JSON")->required();
    train->add_option("--out", out_dir, "output directory (overrides config out_dir)");
    add_seed(train);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured task");
    eval->add_option("--config", config_path, "experiment config JSON")->required();
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--out", out_dir, "output directory");
    add_seed(eval);

    CLI::App* ablate = app.add_subcommand("ablate", "sweep mapping kinds or adjustment strategies");
    ablate->add_option("--config", config_path, "base experiment config JSON")->required();
    ablate->add_option("--axis", axis, "sweep axis: mapping | adjustment")->required();
    ablate->add_option("--seeds", seeds, "seeds per variant (default 5)");
    ablate->add_option("--out", out_dir, "output directory (overrides config out_dir)");
    add_seed(ablate);

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    (void)gradcheck;

    CLI::App* inspect = app.add_subcommand("inspect", "dump learned distance parameters");
    inspect->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    inspect->add_option("--out", out_dir, "output directory");

    CLI::App* export_attention =
        app.add_subcommand("export-attention", "write per-head attention heatmap CSVs");
    export_attention->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    export_attention
        ->add_option("--tokens", tokens_arg, "comma-separated token ids, e.g. 2,7,3,9")
        ->required();
    export_attention->add_option("--out", out_dir, "output directory")->required();

    CLI::App* bench = app.add_subcommand("bench", "forward-pass timing, vanilla vs distance-aware");
    bench->add_option("--n", n_list, "comma-separated sequence lengths (default 16,32,64,128)");
    bench->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            const auto cfg = load_config_with_overrides(config_path,
                                                        seed_set ? &seed : nullptr, out_dir);
            return datf::cmd_train(cfg, out_dir.empty() ? cfg.out_dir : out_dir, std::cout);
        }
        if (eval->parsed()) {
            const auto cfg = load_config_with_overrides(config_path,
                                                        seed_set ? &seed : nullptr, "");
            return datf::cmd_eval(checkpoint_path, cfg, out_dir, std::cout);
        }
        if (ablate->parsed()) {
            const auto cfg = load_config_with_overrides(config_path,
                                                        seed_set ? &seed : nullptr, out_dir);
            return datf::cmd_ablate(cfg, axis, seeds, out_dir.empty() ? cfg.out_dir : out_dir,
                                    std::cout);
        }
        if (gradcheck->parsed()) {
            return datf::cmd_gradcheck(std::cout);
        }
        if (inspect->parsed()) {
            return datf::cmd_inspect(checkpoint_path, out_dir, std::cout);
        }
        if (export_attention->parsed()) {
            return datf::cmd_export_attention(checkpoint_path, parse_int_list(tokens_arg),
                                              out_dir, std::cout);
        }
        if (bench->parsed()) {
            return datf::cmd_bench(parse_int_list(n_list), out_dir, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
