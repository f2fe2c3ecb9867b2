#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bfl/agents.hpp"
#include "bfl/env.hpp"

namespace bfl {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Fully resolved run description: everything a seeded run needs.
struct RunConfig {
    std::string agent_kind = "dqn";  // dqn | qlearn | greedy | random
    long episodes = 3000;
    std::uint64_t seed = 0;
    EnvConfig env;
    AgentConfig agent;
    std::string out_dir = ".";
    int eval_episodes = 100;
    int metrics_window = 100;
    long max_episode_steps = 10000;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed,
                       std::vector<std::string>& errs) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) errs.push_back(path + "." + it.key() + ": unknown key");
    }
}

template <typename T>
void get_field(const nlohmann::json& obj, const std::string& path,
               const char* key, T& out, std::vector<std::string>& errs) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        errs.push_back(path + "." + std::string(key) + ": wrong type");
    }
}

}  // namespace detail

// Builds a RunConfig from a JSON document: unknown keys rejected, omitted keys
// filled from defaults, dB SNR fields converted to linear exactly once, and
// every violation reported with its JSON path.
inline RunConfig config_from_json(const nlohmann::json& doc) {
    using detail::check_keys;
    using detail::get_field;

    std::vector<std::string> errs;
    if (!doc.is_object()) throw ConfigError("$: config root must be an object");
    check_keys(doc, "$", {"env", "queue", "physics", "reward", "agent", "run"},
               errs);

    RunConfig run;
    EnvConfig& env = run.env;

    if (doc.contains("env")) {
        const auto& o = doc.at("env");
        check_keys(o, "$.env",
                   {"n_devices", "f_max", "c_max", "d_max", "e_max", "b_target",
                    "kappa"},
                   errs);
        get_field(o, "$.env", "n_devices", env.n_devices, errs);
        get_field(o, "$.env", "f_max", env.f_max, errs);
        get_field(o, "$.env", "c_max", env.c_max, errs);
        get_field(o, "$.env", "d_max", env.d_max, errs);
        get_field(o, "$.env", "e_max", env.e_max, errs);
        get_field(o, "$.env", "b_target", env.b_target, errs);
        get_field(o, "$.env", "kappa", env.kappa, errs);
    }
    if (doc.contains("queue")) {
        const auto& o = doc.at("queue");
        check_keys(o, "$.queue",
                   {"lambda", "mu0", "mu_max", "l_cr", "l_bp", "m_cap"}, errs);
        get_field(o, "$.queue", "lambda", env.queue.lambda, errs);
        get_field(o, "$.queue", "mu0", env.queue.mu0, errs);
        get_field(o, "$.queue", "mu_max", env.queue.mu_max, errs);
        get_field(o, "$.queue", "l_cr", env.queue.l_cr, errs);
        get_field(o, "$.queue", "l_bp", env.queue.l_bp, errs);
        get_field(o, "$.queue", "m_cap", env.queue.m_cap, errs);
    }
    if (doc.contains("physics")) {
        const auto& o = doc.at("physics");
        check_keys(o, "$.physics",
                   {"delta", "tau", "nu", "sigma", "w_up", "w_dn", "snr_up_db",
                    "snr_dn_db", "model_size_bits"},
                   errs);
        get_field(o, "$.physics", "delta", env.physics.delta, errs);
        get_field(o, "$.physics", "tau", env.physics.tau, errs);
        get_field(o, "$.physics", "nu", env.physics.nu, errs);
        get_field(o, "$.physics", "sigma", env.physics.sigma, errs);
        get_field(o, "$.physics", "w_up", env.physics.w_up, errs);
        get_field(o, "$.physics", "w_dn", env.physics.w_dn, errs);
        get_field(o, "$.physics", "snr_up_db", env.physics.snr_up_db, errs);
        get_field(o, "$.physics", "snr_dn_db", env.physics.snr_dn_db, errs);
        get_field(o, "$.physics", "model_size_bits", env.physics.model_size_bits,
                  errs);
    }
    // dB -> linear, exactly once at parse time.
    env.physics.snr_up = std::pow(10.0, env.physics.snr_up_db / 10.0);
    env.physics.snr_dn = std::pow(10.0, env.physics.snr_dn_db / 10.0);

    if (doc.contains("reward")) {
        const auto& o = doc.at("reward");
        check_keys(o, "$.reward",
                   {"alpha_d", "alpha_e", "alpha_l", "alpha_i", "psi1", "psi2",
                    "eta", "d_norm", "e_norm", "l_norm", "i_norm"},
                   errs);
        RewardWeights& w = env.weights;
        get_field(o, "$.reward", "alpha_d", w.alpha_d, errs);
        get_field(o, "$.reward", "alpha_e", w.alpha_e, errs);
        get_field(o, "$.reward", "alpha_l", w.alpha_l, errs);
        get_field(o, "$.reward", "alpha_i", w.alpha_i, errs);
        get_field(o, "$.reward", "psi1", w.psi1, errs);
        get_field(o, "$.reward", "psi2", w.psi2, errs);
        get_field(o, "$.reward", "eta", w.eta, errs);
        get_field(o, "$.reward", "d_norm", w.d_norm, errs);
        get_field(o, "$.reward", "e_norm", w.e_norm, errs);
        get_field(o, "$.reward", "l_norm", w.l_norm, errs);
        get_field(o, "$.reward", "i_norm", w.i_norm, errs);
    }
    if (doc.contains("agent")) {
        const auto& o = doc.at("agent");
        check_keys(o, "$.agent",
                   {"gamma", "learning_rate", "batch_size", "replay_capacity",
                    "sync_period", "warmup", "hidden", "eps_start", "eps_end",
                    "decay_episodes", "qlearn_alpha"},
                   errs);
        AgentConfig& a = run.agent;
        get_field(o, "$.agent", "gamma", a.gamma, errs);
        get_field(o, "$.agent", "learning_rate", a.learning_rate, errs);
        get_field(o, "$.agent", "batch_size", a.batch_size, errs);
        get_field(o, "$.agent", "replay_capacity", a.replay_capacity, errs);
        get_field(o, "$.agent", "sync_period", a.sync_period, errs);
        get_field(o, "$.agent", "warmup", a.warmup, errs);
        get_field(o, "$.agent", "hidden", a.hidden, errs);
        get_field(o, "$.agent", "eps_start", a.schedule.eps_start, errs);
        get_field(o, "$.agent", "eps_end", a.schedule.eps_end, errs);
        get_field(o, "$.agent", "decay_episodes", a.schedule.decay_episodes,
                  errs);
        get_field(o, "$.agent", "qlearn_alpha", a.qlearn_alpha, errs);
    }
    if (doc.contains("run")) {
        const auto& o = doc.at("run");
        check_keys(o, "$.run",
                   {"agent_kind", "episodes", "seed", "out_dir", "eval_episodes",
                    "metrics_window", "max_episode_steps"},
                   errs);
        get_field(o, "$.run", "agent_kind", run.agent_kind, errs);
        get_field(o, "$.run", "episodes", run.episodes, errs);
        get_field(o, "$.run", "seed", run.seed, errs);
        get_field(o, "$.run", "out_dir", run.out_dir, errs);
        get_field(o, "$.run", "eval_episodes", run.eval_episodes, errs);
        get_field(o, "$.run", "metrics_window", run.metrics_window, errs);
        get_field(o, "$.run", "max_episode_steps", run.max_episode_steps, errs);
    }

    if (errs.empty()) {
        resolve_normalizers(env);
        try {
            env.validate();
            run.agent.validate();
        } catch (const std::invalid_argument& e) {
            errs.push_back(std::string("$.") + e.what());
        }
        if (run.agent_kind != "dqn" && run.agent_kind != "qlearn" &&
            run.agent_kind != "greedy" && run.agent_kind != "random")
            errs.push_back("$.run.agent_kind: must be dqn|qlearn|greedy|random");
        if (run.episodes < 1) errs.push_back("$.run.episodes: must be >= 1");
        if (run.eval_episodes < 1)
            errs.push_back("$.run.eval_episodes: must be >= 1");
        if (run.metrics_window < 1)
            errs.push_back("$.run.metrics_window: must be >= 1");
        if (run.max_episode_steps < 1)
            errs.push_back("$.run.max_episode_steps: must be >= 1");
    }
    if (!errs.empty()) {
        std::string msg;
        for (std::size_t i = 0; i < errs.size(); ++i)
            msg += (i ? "; " : "") + errs[i];
        throw ConfigError(msg);
    }
    return run;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(doc);
}

// Effective config with every default resolved; re-loading it reproduces the
// same RunConfig.
inline nlohmann::json to_json(const RunConfig& run) {
    const EnvConfig& env = run.env;
    nlohmann::json doc;
    doc["env"] = {{"n_devices", env.n_devices}, {"f_max", env.f_max},
                  {"c_max", env.c_max},         {"d_max", env.d_max},
                  {"e_max", env.e_max},         {"b_target", env.b_target},
                  {"kappa", env.kappa}};
    doc["queue"] = {{"lambda", env.queue.lambda}, {"mu0", env.queue.mu0},
                    {"mu_max", env.queue.mu_max}, {"l_cr", env.queue.l_cr},
                    {"l_bp", env.queue.l_bp},     {"m_cap", env.queue.m_cap}};
    doc["physics"] = {{"delta", env.physics.delta},
                      {"tau", env.physics.tau},
                      {"nu", env.physics.nu},
                      {"sigma", env.physics.sigma},
                      {"w_up", env.physics.w_up},
                      {"w_dn", env.physics.w_dn},
                      {"snr_up_db", env.physics.snr_up_db},
                      {"snr_dn_db", env.physics.snr_dn_db},
                      {"model_size_bits", env.physics.model_size_bits}};
    doc["reward"] = {{"alpha_d", env.weights.alpha_d},
                     {"alpha_e", env.weights.alpha_e},
                     {"alpha_l", env.weights.alpha_l},
                     {"alpha_i", env.weights.alpha_i},
                     {"psi1", env.weights.psi1},
                     {"psi2", env.weights.psi2},
                     {"eta", env.weights.eta},
                     {"d_norm", env.weights.d_norm},
                     {"e_norm", env.weights.e_norm},
                     {"l_norm", env.weights.l_norm},
                     {"i_norm", env.weights.i_norm}};
    doc["agent"] = {{"gamma", run.agent.gamma},
                    {"learning_rate", run.agent.learning_rate},
                    {"batch_size", run.agent.batch_size},
                    {"replay_capacity", run.agent.replay_capacity},
                    {"sync_period", run.agent.sync_period},
                    {"warmup", run.agent.warmup},
                    {"hidden", run.agent.hidden},
                    {"eps_start", run.agent.schedule.eps_start},
                    {"eps_end", run.agent.schedule.eps_end},
                    {"decay_episodes", run.agent.schedule.decay_episodes},
                    {"qlearn_alpha", run.agent.qlearn_alpha}};
    doc["run"] = {{"agent_kind", run.agent_kind},
                  {"episodes", run.episodes},
                  {"seed", run.seed},
                  {"out_dir", run.out_dir},
                  {"eval_episodes", run.eval_episodes},
                  {"metrics_window", run.metrics_window},
                  {"max_episode_steps", run.max_episode_steps}};
    return doc;
}

}  // namespace bfl
