#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfl/agents.hpp"
#include "bfl/config.hpp"
#include "bfl/env.hpp"
#include "bfl/rng.hpp"

namespace bfl {

struct EpisodeMetrics {
    long episode = 0;
    long steps = 0;
    double cum_reward = 0.0;
    double total_energy = 0.0;
    double total_latency = 0.0;
    double total_payment = 0.0;
    std::vector<double> data_per_device;
    std::optional<double> mean_epsilon;
    std::optional<double> mean_td_loss;
};

// Shortest round-trip decimal representation, deterministic across runs.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::string metrics_csv_header(int n_devices) {
    std::string h = "episode,steps,cum_reward,total_energy,total_latency,total_payment";
    for (int k = 0; k < n_devices; ++k) h += ",data_dev_" + std::to_string(k);
    h += ",epsilon,mean_td_loss";
    return h;
}

inline std::string metrics_csv_row(const EpisodeMetrics& m) {
    std::string row = std::to_string(m.episode) + "," + std::to_string(m.steps) +
                      "," + format_double(m.cum_reward) + "," +
                      format_double(m.total_energy) + "," +
                      format_double(m.total_latency) + "," +
                      format_double(m.total_payment);
    for (double d : m.data_per_device) row += "," + format_double(d);
    row += ",";
    if (m.mean_epsilon) row += format_double(*m.mean_epsilon);
    row += ",";
    if (m.mean_td_loss) row += format_double(*m.mean_td_loss);
    return row;
}

inline std::unique_ptr<Agent> make_agent(const RunConfig& run,
                                         std::mt19937_64& init_rng) {
    if (run.agent_kind == "dqn")
        return std::make_unique<DqnAgent>(run.env, run.agent, init_rng);
    if (run.agent_kind == "qlearn")
        return std::make_unique<QTableAgent>(run.env, run.agent);
    if (run.agent_kind == "greedy") return std::make_unique<GreedyAgent>(run.env);
    if (run.agent_kind == "random") return std::make_unique<RandomAgent>();
    throw std::invalid_argument("unknown agent kind: " + run.agent_kind);
}

// One reset-to-done rollout. Transitions are recorded and one learn step runs
// per environment step when `learn` is set.
inline EpisodeMetrics run_episode(const RunConfig& run, Agent& agent,
                                  long episode_idx, RngStreams& streams,
                                  bool learn) {
    const EnvConfig& env = run.env;
    EpisodeMetrics m;
    m.episode = episode_idx;
    m.data_per_device.assign(env.n_devices, 0.0);
    m.mean_epsilon = agent.epsilon_now(episode_idx);

    double td_sum = 0.0;
    long td_count = 0;

    SystemState state = reset(env, streams.env);
    long data_so_far = 0;
    std::vector<std::uint8_t> mask = feasible_mask(state, env);
    while (true) {
        if (m.steps >= run.max_episode_steps)
            throw std::runtime_error(
                "episode " + std::to_string(episode_idx) + " exceeded " +
                std::to_string(run.max_episode_steps) +
                " steps without reaching b_target; check the config");
        long a_idx = agent.select(state, mask, episode_idx, streams.explore);
        Action action = decode_action(a_idx, env);
        StepOutcome out = step(state, action, data_so_far, env, streams.env);
        std::vector<std::uint8_t> mask_next = feasible_mask(out.next_state, env);

        if (learn) {
            agent.record(state, a_idx, out.reward, out.next_state, out.done,
                         mask_next);
            if (auto loss = agent.learn(streams.explore)) {
                td_sum += *loss;
                ++td_count;
            }
        }

        ++m.steps;
        m.cum_reward += out.reward;
        m.total_energy += out.components.energy;
        m.total_latency += out.components.latency;
        m.total_payment += out.components.payment;
        for (int i = 0; i < env.n_devices; ++i) m.data_per_device[i] += action.d[i];

        state = std::move(out.next_state);
        mask = std::move(mask_next);
        data_so_far = out.episode_data_so_far;
        if (out.done) break;
    }
    if (td_count > 0) m.mean_td_loss = td_sum / td_count;
    return m;
}

inline void write_checkpoint(const Agent& agent, const std::string& path) {
    auto doc = agent.checkpoint();
    if (!doc) return;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << doc->dump(2) << "\n";
}

struct TrainResult {
    std::vector<EpisodeMetrics> episodes;
    std::string metrics_path;
    std::string checkpoint_path;  // empty for agents without learnable state
};

// Trains for run.episodes episodes, appending one metrics row per episode to
// <out_dir>/metrics.csv as it goes and checkpointing every 500 episodes.
inline TrainResult train(const RunConfig& run) {
    std::filesystem::create_directories(run.out_dir);
    {
        std::ofstream echo(run.out_dir + "/effective_config.json");
        if (!echo)
            throw std::runtime_error("cannot write to output directory: " +
                                     run.out_dir);
        echo << to_json(run).dump(2) << "\n";
    }

    TrainResult result;
    result.metrics_path = run.out_dir + "/metrics.csv";
    std::ofstream csv(result.metrics_path);
    if (!csv)
        throw std::runtime_error("cannot write metrics CSV: " + result.metrics_path);
    csv << metrics_csv_header(run.env.n_devices) << "\n" << std::flush;

    RngStreams streams(run.seed);
    std::unique_ptr<Agent> agent = make_agent(run, streams.init);
    bool has_checkpoint = agent->checkpoint().has_value();
    if (has_checkpoint) result.checkpoint_path = run.out_dir + "/checkpoint.json";

    for (long ep = 0; ep < run.episodes; ++ep) {
        EpisodeMetrics m = run_episode(run, *agent, ep, streams, true);
        if (auto* dqn = dynamic_cast<DqnAgent*>(agent.get()))
            dqn->note_episode_end();
        csv << metrics_csv_row(m) << "\n" << std::flush;
        result.episodes.push_back(std::move(m));
        if (has_checkpoint && (ep + 1) % 500 == 0)
            write_checkpoint(*agent, result.checkpoint_path);
    }
    if (has_checkpoint) write_checkpoint(*agent, result.checkpoint_path);
    return result;
}

struct ColumnStats {
    std::string name;
    double mean = 0.0;
    double stddev = 0.0;
};

struct EvalResult {
    std::vector<EpisodeMetrics> episodes;
    std::vector<ColumnStats> summary;
};

inline std::vector<ColumnStats> summarize(
    const std::vector<EpisodeMetrics>& eps, int n_devices) {
    std::vector<std::string> names = {"steps", "cum_reward", "total_energy",
                                      "total_latency", "total_payment"};
    for (int k = 0; k < n_devices; ++k)
        names.push_back("data_dev_" + std::to_string(k));
    auto column = [&](const EpisodeMetrics& m, std::size_t c) -> double {
        switch (c) {
            case 0: return static_cast<double>(m.steps);
            case 1: return m.cum_reward;
            case 2: return m.total_energy;
            case 3: return m.total_latency;
            case 4: return m.total_payment;
            default: return m.data_per_device[c - 5];
        }
    };
    std::vector<ColumnStats> stats;
    for (std::size_t c = 0; c < names.size(); ++c) {
        double sum = 0.0;
        for (const auto& m : eps) sum += column(m, c);
        double mean = sum / eps.size();
        double sq = 0.0;
        for (const auto& m : eps) {
            double d = column(m, c) - mean;
            sq += d * d;
        }
        stats.push_back({names[c], mean, std::sqrt(sq / eps.size())});
    }
    return stats;
}

// Greedy-policy (epsilon = 0) evaluation of a trained agent. checkpoint_path
// may be empty for agents without learnable state.
inline EvalResult evaluate(const RunConfig& run,
                           const std::string& checkpoint_path) {
    RngStreams streams(run.seed);
    std::unique_ptr<Agent> agent = make_agent(run, streams.init);
    if (!checkpoint_path.empty()) {
        std::ifstream in(checkpoint_path);
        if (!in)
            throw std::runtime_error("cannot open checkpoint: " + checkpoint_path);
        nlohmann::json doc = nlohmann::json::parse(in);
        std::string kind = doc.value("agent_kind", "dqn");
        if (kind != run.agent_kind)
            throw std::runtime_error("checkpoint agent kind '" + kind +
                                     "' does not match config '" +
                                     run.agent_kind + "'");
        if (auto* dqn = dynamic_cast<DqnAgent*>(agent.get()))
            dqn->restore(doc);
        else if (auto* tab = dynamic_cast<QTableAgent*>(agent.get()))
            tab->restore(doc);
    }
    agent->set_eval(true);

    EvalResult result;
    for (int ep = 0; ep < run.eval_episodes; ++ep)
        result.episodes.push_back(run_episode(run, *agent, ep, streams, false));
    result.summary = summarize(result.episodes, run.env.n_devices);

    std::filesystem::create_directories(run.out_dir);
    std::ofstream csv(run.out_dir + "/eval_metrics.csv");
    csv << metrics_csv_header(run.env.n_devices) << "\n";
    for (const auto& m : result.episodes) csv << metrics_csv_row(m) << "\n";
    nlohmann::json sj;
    for (const auto& c : result.summary)
        sj[c.name] = {{"mean", c.mean}, {"stddev", c.stddev}};
    std::ofstream sum(run.out_dir + "/eval_summary.json");
    sum << sj.dump(2) << "\n";
    return result;
}

struct SweepRow {
    std::string ratio;
    int device = 0;
    double mean_data = 0.0;  // per-episode data units taken from this device
};

inline std::string ratio_label(const std::vector<double>& eta) {
    std::string s;
    for (std::size_t i = 0; i < eta.size(); ++i)
        s += (i ? ":" : "") + format_double(eta[i]);
    return s;
}

// Data-quality sweep: trains one DQN per eta ratio and reports the mean
// per-device data taken per evaluation episode.
inline std::vector<SweepRow> sweep_quality(
    const RunConfig& base, const std::vector<std::vector<double>>& ratios) {
    std::vector<SweepRow> rows;
    std::filesystem::create_directories(base.out_dir);
    std::ofstream csv(base.out_dir + "/sweep.csv");
    if (!csv)
        throw std::runtime_error("cannot write sweep CSV in " + base.out_dir);
    csv << "ratio,device,mean_data\n" << std::flush;

    for (const auto& ratio : ratios) {
        if (static_cast<int>(ratio.size()) != base.env.n_devices)
            throw std::invalid_argument("sweep ratio length != n_devices");
        RunConfig run = base;
        run.agent_kind = "dqn";
        run.env.weights.eta = ratio;
        std::string label = ratio_label(ratio);
        std::string dir_label = label;
        for (char& ch : dir_label)
            if (ch == ':') ch = '_';
        run.out_dir = base.out_dir + "/ratio_" + dir_label;

        TrainResult trained = train(run);
        EvalResult eval = evaluate(run, trained.checkpoint_path);
        for (int k = 0; k < run.env.n_devices; ++k) {
            double mean = 0.0;
            for (const auto& m : eval.episodes) mean += m.data_per_device[k];
            mean /= eval.episodes.size();
            rows.push_back({label, k, mean});
            csv << label << "," << k << "," << format_double(mean) << "\n"
                << std::flush;
        }
    }
    return rows;
}

}  // namespace bfl
