// Command-line front end: training, evaluation, baselines, and the
// data-quality sweep, all driven by a JSON config.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bfl/config.hpp"
#include "bfl/harness.hpp"

namespace {

std::vector<std::vector<double>> parse_ratios(const std::string& spec) {
    std::vector<std::vector<double>> ratios;
    std::stringstream groups(spec);
    std::string group;
    while (std::getline(groups, group, ',')) {
        std::vector<double> ratio;
        std::stringstream parts(group);
        std::string part;
        while (std::getline(parts, part, ':')) {
            std::size_t used = 0;
            double v = std::stod(part, &used);
            if (used != part.size() || v <= 0.0)
                throw bfl::ConfigError("bad ratio component '" + part + "' in " +
                                       group);
            ratio.push_back(v);
        }
        if (ratio.empty()) throw bfl::ConfigError("empty ratio group in " + spec);
        ratios.push_back(std::move(ratio));
    }
    if (ratios.empty()) throw bfl::ConfigError("no ratios given");
    return ratios;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blockchain-enabled federated learning resource-management "
                 "simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, agent_kind, ratios_spec;
    std::optional<std::uint64_t> seed;
    std::optional<long> episodes;

    CLI::App* train = app.add_subcommand("train", "Train or run a policy");
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--agent", agent_kind, "dqn|qlearn|greedy|random");
    train->add_option("--seed", seed, "Master seed (64-bit)");
    train->add_option("--out", out_dir, "Output directory");
    train->add_option("--episodes", episodes, "Episode count override");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--config", config_path, "JSON config file")->required();
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON");
    eval->add_option("--episodes", episodes, "Evaluation episode count");
    eval->add_option("--seed", seed, "Master seed (64-bit)");
    eval->add_option("--out", out_dir, "Output directory");

    CLI::App* sweep = app.add_subcommand("sweep-quality",
                                         "Data-quality ratio sweep");
    sweep->add_option("--config", config_path, "JSON config file")->required();
    sweep->add_option("--ratios", ratios_spec,
                      "Comma-separated eta ratios, e.g. 1:1:1,4:2:1")
        ->required();
    sweep->add_option("--seed", seed, "Master seed (64-bit)");
    sweep->add_option("--out", out_dir, "Output directory");

    CLI::App* validate = app.add_subcommand("validate",
                                            "Validate a config and print the "
                                            "effective settings");
    validate->add_option("--config", config_path, "JSON config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        bfl::RunConfig run = bfl::load_config(config_path);
        if (!agent_kind.empty()) run.agent_kind = agent_kind;
        if (seed) run.seed = *seed;
        if (!out_dir.empty()) run.out_dir = out_dir;

        if (validate->parsed()) {
            std::cout << bfl::to_json(run).dump(2) << "\n";
            return 0;
        }
        if (train->parsed()) {
            if (episodes) run.episodes = *episodes;
            bfl::TrainResult result = bfl::train(run);
            std::cout << "wrote " << result.metrics_path << " ("
                      << result.episodes.size() << " episodes)\n";
            if (!result.checkpoint_path.empty())
                std::cout << "wrote " << result.checkpoint_path << "\n";
            return 0;
        }
        if (eval->parsed()) {
            if (episodes) run.eval_episodes = static_cast<int>(*episodes);
            bfl::EvalResult result = bfl::evaluate(run, checkpoint_path);
            for (const auto& c : result.summary)
                std::cout << c.name << ": " << bfl::format_double(c.mean)
                          << " +- " << bfl::format_double(c.stddev) << "\n";
            return 0;
        }
        if (sweep->parsed()) {
            auto rows = bfl::sweep_quality(run, parse_ratios(ratios_spec));
            for (const auto& r : rows)
                std::cout << r.ratio << " device " << r.device << ": "
                          << bfl::format_double(r.mean_data) << "\n";
            return 0;
        }
    } catch (const bfl::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
