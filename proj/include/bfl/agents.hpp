#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bfl/env.hpp"
#include "bfl/net.hpp"

namespace bfl {

// Replay record. mask_next is kept so the bootstrap max ranges over feasible
// next actions only.
struct Transition {
    Eigen::VectorXd s;
    long a = 0;
    double r = 0.0;
    Eigen::VectorXd s_next;
    bool done = false;
    std::vector<std::uint8_t> mask_next;
};

// FIFO ring buffer; overwrites the oldest transition when full.
class ReplayMemory {
  public:
    explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ == 0)
            throw std::invalid_argument("ReplayMemory: capacity must be >= 1");
        buffer_.reserve(capacity_);
    }

    void push(Transition t) {
        if (buffer_.size() < capacity_) {
            buffer_.push_back(std::move(t));
        } else {
            buffer_[cursor_] = std::move(t);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    std::size_t size() const { return buffer_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return buffer_[i]; }

  private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> buffer_;
};

struct EpsilonSchedule {
    double eps_start = 0.9;
    double eps_end = 0.1;
    long decay_episodes = 2000;

    void validate() const {
        if (!(0.0 <= eps_end && eps_end <= eps_start && eps_start <= 1.0))
            throw std::invalid_argument(
                "schedule: need 0 <= eps_end <= eps_start <= 1");
        if (decay_episodes < 1)
            throw std::invalid_argument("schedule: decay_episodes must be >= 1");
    }
};

// Linear decay from eps_start at episode 0 to eps_end at decay_episodes,
// constant thereafter.
inline double epsilon(long episode, const EpsilonSchedule& sch) {
    if (episode < 0) throw std::invalid_argument("epsilon: episode must be >= 0");
    if (episode >= sch.decay_episodes) return sch.eps_end;
    double frac = static_cast<double>(episode) / sch.decay_episodes;
    return sch.eps_start + (sch.eps_end - sch.eps_start) * frac;
}

// Masked epsilon-greedy over a Q-value vector. Infeasible entries are treated
// as -inf; greedy ties break toward the lowest index.
inline long select_action(const Eigen::VectorXd& q,
                          const std::vector<std::uint8_t>& mask, double eps,
                          std::mt19937_64& rng) {
    if (q.size() != static_cast<Eigen::Index>(mask.size()))
        throw std::invalid_argument("select_action: q/mask length mismatch");
    long n_feasible = std::count(mask.begin(), mask.end(), 1);
    if (n_feasible == 0)
        throw std::invalid_argument("select_action: mask has no feasible action");

    if (eps > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < eps) {
            std::uniform_int_distribution<long> pick(0, n_feasible - 1);
            long k = pick(rng);
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i] && k-- == 0) return static_cast<long>(i);
        }
    }
    long best = -1;
    double best_q = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] && q[i] > best_q) {
            best_q = q[i];
            best = static_cast<long>(i);
        }
    return best;
}

// Uniform draw over feasible indices.
inline long random_policy(const std::vector<std::uint8_t>& mask,
                          std::mt19937_64& rng) {
    long n_feasible = std::count(mask.begin(), mask.end(), 1);
    if (n_feasible == 0)
        throw std::invalid_argument("random_policy: mask has no feasible action");
    std::uniform_int_distribution<long> pick(0, n_feasible - 1);
    long k = pick(rng);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] && k-- == 0) return static_cast<long>(i);
    return -1;  // unreachable
}

// Greedy baseline: demand the largest feasible d from each device (D_max when
// possible), energy drawn uniformly from the feasible set, mu uniform.
inline Action greedy_policy(const SystemState& state, const EnvConfig& cfg,
                            std::mt19937_64& rng) {
    Action a;
    a.d.assign(cfg.n_devices, 0);
    a.e.assign(cfg.n_devices, 0);
    for (int i = 0; i < cfg.n_devices; ++i) {
        const DeviceState& dev = state.devices[i];
        for (int d = cfg.d_max; d >= 1; --d) {
            // cpu_frequency grows with e, so feasible energies form a prefix.
            int e_ub = 0;
            for (int e = 1; e <= std::min(dev.c, cfg.e_max); ++e) {
                if (cpu_frequency(e, d, cfg.physics) <=
                    cfg.physics.sigma * static_cast<double>(dev.f))
                    e_ub = e;
                else
                    break;
            }
            if (e_ub >= 1) {
                std::uniform_int_distribution<int> pick(1, e_ub);
                a.d[i] = d;
                a.e[i] = pick(rng);
                break;
            }
        }
    }
    std::uniform_int_distribution<int> mu_pick(cfg.queue.mu0, cfg.queue.mu_max);
    a.mu = mu_pick(rng);
    return a;
}

inline Eigen::MatrixXd forward_batch(const NetworkParams& p,
                                     const Eigen::MatrixXd& x) {
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        h = (p.weights[l] * h).colwise() + p.biases[l];
        if (l + 1 < p.layer_count()) h = h.cwiseMax(0.0);
    }
    return h;
}

// One mini-batch TD update: y = r + gamma * max over feasible next actions of
// the frozen net's Q (y = r for terminal transitions), then a descent step on
// the squared TD error of the chosen actions, averaged over the batch.
// Returns the batch mean squared TD error before the update.
inline double dqn_batch_update(NetworkParams& online,
                               const NetworkParams& target,
                               const std::vector<const Transition*>& batch,
                               double gamma, double alpha) {
    const int B = static_cast<int>(batch.size());
    if (B == 0) throw std::invalid_argument("dqn_batch_update: empty batch");

    const int in_dim = online.input_dim();
    Eigen::MatrixXd x(in_dim, B), x_next(in_dim, B);
    for (int j = 0; j < B; ++j) {
        x.col(j) = batch[j]->s;
        x_next.col(j) = batch[j]->s_next;
    }

    Eigen::MatrixXd q_next = forward_batch(target, x_next);
    Eigen::VectorXd y(B);
    for (int j = 0; j < B; ++j) {
        if (batch[j]->done) {
            y[j] = batch[j]->r;
            continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        const auto& mask = batch[j]->mask_next;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) best = std::max(best, q_next(i, j));
        y[j] = batch[j]->r + gamma * best;
    }

    // Online forward with cached activations; only the chosen outputs are
    // needed, so the full output layer is never materialized.
    const std::size_t L = online.layer_count();
    std::vector<Eigen::MatrixXd> acts(L);  // acts[l]: input to layer l
    acts[0] = x;
    for (std::size_t l = 0; l + 1 < L; ++l)
        acts[l + 1] =
            ((online.weights[l] * acts[l]).colwise() + online.biases[l])
                .cwiseMax(0.0);

    Eigen::VectorXd err(B);
    for (int j = 0; j < B; ++j) {
        long a = batch[j]->a;
        err[j] = y[j] - (online.weights[L - 1].row(a) * acts[L - 1].col(j) +
                         online.biases[L - 1].row(a))(0);
    }

    // Backprop the mean of 0.5 * err^2 with a sparse output layer.
    Gradients g = zero_gradients(online);
    Eigen::MatrixXd delta(online.layer_dims[L - 1], B);
    for (int j = 0; j < B; ++j) {
        long a = batch[j]->a;
        double dq = -err[j] / B;
        g.weights[L - 1].row(a) += dq * acts[L - 1].col(j).transpose();
        g.biases[L - 1][a] += dq;
        delta.col(j) = dq * online.weights[L - 1].row(a).transpose();
    }
    for (std::size_t l = L - 1; l-- > 0;) {
        Eigen::MatrixXd dz =
            (acts[l + 1].array() > 0.0).cast<double>() * delta.array();
        g.weights[l].noalias() = dz * acts[l].transpose();
        g.biases[l] = dz.rowwise().sum();
        if (l > 0) delta.noalias() = online.weights[l].transpose() * dz;
    }
    apply_update(online, g, alpha);
    return err.squaredNorm() / B;
}

struct AgentConfig {
    double gamma = 0.9;
    double learning_rate = 0.001;
    int batch_size = 64;
    int replay_capacity = 10000;
    int sync_period = 200;   // learn-steps between target syncs
    int warmup = 1000;       // transitions before learning starts
    std::vector<int> hidden = {128, 128};
    EpsilonSchedule schedule;
    double qlearn_alpha = 0.1;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw std::invalid_argument("agent.gamma must be in [0, 1)");
        if (learning_rate <= 0.0)
            throw std::invalid_argument("agent.learning_rate must be > 0");
        if (batch_size < 1 || replay_capacity < batch_size)
            throw std::invalid_argument(
                "agent: need 1 <= batch_size <= replay_capacity");
        if (sync_period < 1)
            throw std::invalid_argument("agent.sync_period must be >= 1");
        if (warmup < batch_size)
            throw std::invalid_argument("agent.warmup must be >= batch_size");
        if (hidden.empty())
            throw std::invalid_argument("agent.hidden must be non-empty");
        if (qlearn_alpha < 0.0)
            throw std::invalid_argument("agent.qlearn_alpha must be >= 0");
        schedule.validate();
    }
};

// Common policy surface consumed by the episode loop.
class Agent {
  public:
    virtual ~Agent() = default;
    virtual long select(const SystemState& s, const std::vector<std::uint8_t>& mask,
                        long episode, std::mt19937_64& rng) = 0;
    virtual void record(const SystemState&, long, double, const SystemState&,
                        bool, const std::vector<std::uint8_t>&) {}
    // One learning update; nullopt when not applicable (warm-up, baselines).
    virtual std::optional<double> learn(std::mt19937_64&) { return std::nullopt; }
    virtual std::optional<double> epsilon_now(long) const { return std::nullopt; }
    virtual void set_eval(bool) {}
    virtual std::optional<nlohmann::json> checkpoint() const {
        return std::nullopt;
    }
};

// DQN: online/target networks, replay memory, batched TD updates per the
// y = r + gamma * max_a' Q(s', a'; theta-) target.
class DqnAgent : public Agent {
  public:
    DqnAgent(const EnvConfig& env, const AgentConfig& cfg, std::mt19937_64& init_rng)
        : env_(env), cfg_(cfg), memory_(cfg.replay_capacity) {
        cfg_.validate();
        std::vector<int> dims;
        dims.push_back(2 * env.n_devices + 1);
        dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
        dims.push_back(static_cast<int>(env.action_count()));
        online_ = init_network(dims, init_rng);
        target_ = online_;
    }

    long select(const SystemState& s, const std::vector<std::uint8_t>& mask,
                long episode, std::mt19937_64& rng) override {
        Eigen::VectorXd q = forward(online_, state_features(s, env_));
        double eps = eval_ ? 0.0 : epsilon(episode, cfg_.schedule);
        return select_action(q, mask, eps, rng);
    }

    void record(const SystemState& s, long a, double r, const SystemState& s_next,
                bool done, const std::vector<std::uint8_t>& mask_next) override {
        memory_.push(Transition{state_features(s, env_), a, r,
                                state_features(s_next, env_), done, mask_next});
    }

    std::optional<double> learn(std::mt19937_64& rng) override {
        if (eval_ || memory_.size() < static_cast<std::size_t>(cfg_.warmup))
            return std::nullopt;
        return learn_step(rng);
    }

    // One mini-batch update; returns the batch mean squared TD error.
    // Throws when the memory cannot fill a batch.
    double learn_step(std::mt19937_64& rng) {
        const int B = cfg_.batch_size;
        if (memory_.size() < static_cast<std::size_t>(B))
            throw std::runtime_error("dqn_learn_step: replay memory underfull");

        std::uniform_int_distribution<std::size_t> pick(0, memory_.size() - 1);
        std::vector<const Transition*> batch(B);
        for (int j = 0; j < B; ++j) batch[j] = &memory_[pick(rng)];

        double loss = dqn_batch_update(online_, target_, batch, cfg_.gamma,
                                       cfg_.learning_rate);
        if (++learn_steps_ % cfg_.sync_period == 0) target_ = online_;
        return loss;
    }

    std::optional<double> epsilon_now(long episode) const override {
        return eval_ ? 0.0 : epsilon(episode, cfg_.schedule);
    }
    void set_eval(bool eval) override { eval_ = eval; }
    void note_episode_end() { ++episodes_done_; }

    std::optional<nlohmann::json> checkpoint() const override {
        nlohmann::json doc;
        doc["agent_kind"] = "dqn";
        doc["gamma"] = cfg_.gamma;
        doc["steps_done"] = learn_steps_;
        doc["episodes_done"] = episodes_done_;
        doc["schedule"] = {{"eps_start", cfg_.schedule.eps_start},
                           {"eps_end", cfg_.schedule.eps_end},
                           {"decay_episodes", cfg_.schedule.decay_episodes}};
        doc["network"] = to_json(online_);
        return doc;
    }

    void restore(const nlohmann::json& doc) {
        NetworkParams net = network_from_json(doc.at("network"));
        if (net.layer_dims.front() != online_.layer_dims.front() ||
            net.layer_dims.back() != online_.layer_dims.back())
            throw std::invalid_argument(
                "checkpoint: network dims incompatible with config");
        online_ = net;
        target_ = online_;
        learn_steps_ = doc.value("steps_done", 0L);
        episodes_done_ = doc.value("episodes_done", 0L);
    }

    const NetworkParams& online() const { return online_; }
    const NetworkParams& target() const { return target_; }
    ReplayMemory& memory() { return memory_; }
    long learn_steps() const { return learn_steps_; }

  private:
    EnvConfig env_;
    AgentConfig cfg_;
    NetworkParams online_, target_;
    ReplayMemory memory_;
    long learn_steps_ = 0;
    long episodes_done_ = 0;
    bool eval_ = false;
};

// Sparse tabular Q-learning over the clamped discrete state.
class QTableAgent : public Agent {
  public:
    QTableAgent(const EnvConfig& env, const AgentConfig& cfg)
        : env_(env), cfg_(cfg), action_count_(env.action_count()) {
        cfg_.validate();
    }

    // Mixed-radix key over (f vector, c vector, min(m, m_cap)).
    std::uint64_t state_key(const SystemState& s) const {
        std::uint64_t key = 0;
        for (const auto& dev : s.devices) key = key * (env_.f_max + 1) + dev.f;
        for (const auto& dev : s.devices) key = key * (env_.c_max + 1) + dev.c;
        return key * (env_.queue.m_cap + 1) + std::min(s.m, env_.queue.m_cap);
    }

    double value(std::uint64_t skey, long a) const {
        auto it = table_.find(skey * action_count_ + a);
        return it == table_.end() ? 0.0 : it->second;
    }

    long select(const SystemState& s, const std::vector<std::uint8_t>& mask,
                long episode, std::mt19937_64& rng) override {
        std::uint64_t skey = state_key(s);
        Eigen::VectorXd q(action_count_);
        for (long a = 0; a < action_count_; ++a) q[a] = value(skey, a);
        double eps = eval_ ? 0.0 : epsilon(episode, cfg_.schedule);
        return select_action(q, mask, eps, rng);
    }

    void record(const SystemState& s, long a, double r, const SystemState& s_next,
                bool done, const std::vector<std::uint8_t>& mask_next) override {
        if (eval_) return;
        update(s, a, r, s_next, done, mask_next);
    }

    // Watkins rule with the max restricted to feasible next actions.
    double update(const SystemState& s, long a, double r,
                  const SystemState& s_next, bool done,
                  const std::vector<std::uint8_t>& mask_next) {
        double target = r;
        if (!done) {
            std::uint64_t nkey = state_key(s_next);
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < mask_next.size(); ++i)
                if (mask_next[i])
                    best = std::max(best, value(nkey, static_cast<long>(i)));
            target += cfg_.gamma * best;
        }
        std::uint64_t key = state_key(s) * action_count_ + a;
        double old = 0.0;
        if (auto it = table_.find(key); it != table_.end()) old = it->second;
        double updated = old + cfg_.qlearn_alpha * (target - old);
        table_[key] = updated;
        return updated;
    }

    std::optional<double> epsilon_now(long episode) const override {
        return eval_ ? 0.0 : epsilon(episode, cfg_.schedule);
    }
    void set_eval(bool eval) override { eval_ = eval; }
    std::size_t table_size() const { return table_.size(); }

    std::optional<nlohmann::json> checkpoint() const override {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [k, v] : table_) entries.push_back({k, v});
        return nlohmann::json{{"agent_kind", "qlearn"},
                              {"gamma", cfg_.gamma},
                              {"alpha", cfg_.qlearn_alpha},
                              {"entries", entries}};
    }

    void restore(const nlohmann::json& doc) {
        table_.clear();
        for (const auto& e : doc.at("entries"))
            table_[e.at(0).get<std::uint64_t>()] = e.at(1).get<double>();
    }

  private:
    EnvConfig env_;
    AgentConfig cfg_;
    long action_count_;
    std::unordered_map<std::uint64_t, double> table_;
    bool eval_ = false;
};

class GreedyAgent : public Agent {
  public:
    explicit GreedyAgent(const EnvConfig& env) : env_(env) {}
    long select(const SystemState& s, const std::vector<std::uint8_t>& mask,
                long, std::mt19937_64& rng) override {
        long idx = encode_action(greedy_policy(s, env_, rng), env_);
        if (!mask[idx])
            throw std::logic_error("greedy_policy produced an infeasible action");
        return idx;
    }

  private:
    EnvConfig env_;
};

class RandomAgent : public Agent {
  public:
    long select(const SystemState&, const std::vector<std::uint8_t>& mask, long,
                std::mt19937_64& rng) override {
        return random_policy(mask, rng);
    }
};

}  // namespace bfl
