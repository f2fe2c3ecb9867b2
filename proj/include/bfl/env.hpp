#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfl/queue.hpp"

namespace bfl {

// Radio/compute constants. SNR fields are stored linear; the *_db companions
// keep the values as configured so the effective config echoes bit-exactly.
struct PhysicsConfig {
    double delta = 1.0;          // joules per energy unit
    double tau = 1e-28;          // effective switched capacitance
    double nu = 1e10;            // CPU cycles per data unit
    double sigma = 0.6e9;        // CPU cycles per CPU-share unit, Hz
    double w_up = 3e5;           // uplink bandwidth, Hz
    double w_dn = 3e5;           // downlink bandwidth, Hz
    double snr_up_db = 10.0;
    double snr_dn_db = 10.0;
    double snr_up = 10.0;        // linear, derived from snr_up_db at load
    double snr_dn = 10.0;
    double model_size_bits = 1e4;  // global/local model update size

    void validate() const {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0))
                throw std::invalid_argument(std::string("physics.") + name +
                                            " must be > 0");
        };
        pos(delta, "delta");
        pos(tau, "tau");
        pos(nu, "nu");
        pos(sigma, "sigma");
        pos(w_up, "w_up");
        pos(w_dn, "w_dn");
        pos(snr_up, "snr_up");
        pos(snr_dn, "snr_dn");
        pos(model_size_bits, "model_size_bits");
    }
};

struct DeviceState {
    int f = 0;  // CPU shares, 0..F_max
    int c = 0;  // energy units, 0..C_max
};

struct SystemState {
    std::vector<DeviceState> devices;
    int m = 0;  // raw queue occupancy
};

struct Action {
    std::vector<int> d;  // data units per device
    std::vector<int> e;  // energy units per device
    int mu = 0;          // block generation rate
};

struct RewardWeights {
    double alpha_d = 10.0;
    double alpha_e = 1.0;
    double alpha_l = 3.0;
    double alpha_i = 2.0;
    double psi1 = 0.2;
    double psi2 = 0.8;
    std::vector<double> eta;  // data-quality indicator per device
    // Normalizers; <= 0 means "compute default at config resolution".
    double d_norm = 0.0;
    double e_norm = 0.0;
    double l_norm = 0.0;
    double i_norm = 0.0;
};

struct EnvConfig {
    int n_devices = 3;
    int f_max = 3;
    int c_max = 3;
    int d_max = 3;
    int e_max = 3;
    long b_target = 2000;  // data units ending an episode
    double kappa = 1.0;    // mean harvested energy units per iteration
    QueueConfig queue;
    PhysicsConfig physics;
    RewardWeights weights;

    int pair_count() const { return 1 + d_max * e_max; }
    int mu_count() const { return queue.mu_max - queue.mu0 + 1; }
    long action_count() const {
        long n = 1;
        for (int i = 0; i < n_devices; ++i) n *= pair_count();
        return n * mu_count();
    }

    void validate() const {
        if (n_devices < 1)
            throw std::invalid_argument("env.n_devices must be >= 1");
        if (f_max < 1 || c_max < 1 || d_max < 1 || e_max < 1)
            throw std::invalid_argument("env capacities must be >= 1");
        if (e_max > c_max)
            throw std::invalid_argument("env.e_max must be <= env.c_max");
        if (b_target < 1)
            throw std::invalid_argument("env.b_target must be >= 1");
        if (kappa < 0.0)
            throw std::invalid_argument("env.kappa must be >= 0");
        queue.validate();
        physics.validate();
        if (static_cast<int>(weights.eta.size()) != n_devices)
            throw std::invalid_argument("reward.eta must have n_devices entries");
        for (double q : weights.eta)
            if (!(q > 0.0))
                throw std::invalid_argument("reward.eta entries must be > 0");
        if (!(weights.d_norm > 0.0 && weights.e_norm > 0.0 &&
              weights.l_norm > 0.0 && weights.i_norm > 0.0))
            throw std::invalid_argument("reward normalizers must be > 0");
    }
};

// Transmission latency of one model download + upload.
inline double transmission_latency(const PhysicsConfig& p, bool any_training) {
    if (!any_training) return 0.0;
    return p.model_size_bits / (p.w_dn * std::log2(1.0 + p.snr_dn)) +
           p.model_size_bits / (p.w_up * std::log2(1.0 + p.snr_up));
}

// Fills in any normalizer left unset. l_norm bounds the worst case: slowest
// training (d = D_max with a single energy unit) plus transmission plus fixed
// block delays plus the 99th-percentile mining delay at the slowest rate.
inline void resolve_normalizers(EnvConfig& cfg) {
    RewardWeights& w = cfg.weights;
    if (w.eta.empty()) w.eta.assign(cfg.n_devices, 1.0);
    const PhysicsConfig& p = cfg.physics;
    if (w.d_norm <= 0.0) w.d_norm = cfg.d_max;
    if (w.e_norm <= 0.0) w.e_norm = static_cast<double>(cfg.n_devices) * cfg.e_max;
    if (w.l_norm <= 0.0) {
        double worst_train = std::sqrt(p.tau * p.nu * p.nu * p.nu * cfg.d_max *
                                       cfg.d_max * cfg.d_max / p.delta);
        double mine_p99 =
            std::log(100.0) / (static_cast<double>(cfg.queue.mu0) - cfg.queue.lambda);
        w.l_norm = worst_train + transmission_latency(p, true) + cfg.queue.l_cr +
                   cfg.queue.l_bp + mine_p99;
    }
    if (w.i_norm <= 0.0)
        w.i_norm = w.psi1 * cfg.d_max + w.psi2 / std::log(2.0);
}

inline EnvConfig default_env_config() {
    EnvConfig cfg;
    resolve_normalizers(cfg);
    return cfg;
}

// f_i^c = sqrt(delta * e / (tau * nu * d)), the CPU frequency a device needs
// to train d data units with an energy budget of e units.
inline double cpu_frequency(int e, int d, const PhysicsConfig& p) {
    if (d < 1)
        throw std::invalid_argument("cpu_frequency: d must be >= 1");
    if (e < 1)
        throw std::invalid_argument("cpu_frequency: e must be >= 1");
    return std::sqrt(p.delta * e / (p.tau * p.nu * d));
}

// --- Action codec -----------------------------------------------------------
//
// Per device the (d, e) pair ranges over the static set
// {(0,0)} + {(d,e) : 1<=d<=D_max, 1<=e<=E_max}, indexed 0..D_max*E_max.
// The joint index is mixed-radix over the device pairs (device 0 most
// significant) with mu - mu0 as the least significant digit.

inline int pair_index(int d, int e, const EnvConfig& cfg) {
    if (d == 0 && e == 0) return 0;
    if (d < 1 || d > cfg.d_max || e < 1 || e > cfg.e_max)
        throw std::invalid_argument(
            "pair_index: (d,e) violates the static pairing rule");
    return 1 + (d - 1) * cfg.e_max + (e - 1);
}

inline std::pair<int, int> decode_pair(int p, const EnvConfig& cfg) {
    if (p == 0) return {0, 0};
    return {(p - 1) / cfg.e_max + 1, (p - 1) % cfg.e_max + 1};
}

inline long encode_action(const Action& a, const EnvConfig& cfg) {
    if (static_cast<int>(a.d.size()) != cfg.n_devices ||
        static_cast<int>(a.e.size()) != cfg.n_devices)
        throw std::invalid_argument("encode_action: wrong vector lengths");
    if (a.mu < cfg.queue.mu0 || a.mu > cfg.queue.mu_max)
        throw std::invalid_argument("encode_action: mu outside [mu0, mu_max]");
    long idx = 0;
    for (int i = 0; i < cfg.n_devices; ++i) {
        if ((a.d[i] == 0) != (a.e[i] == 0))
            throw std::invalid_argument(
                "encode_action: d_i = 0 iff e_i = 0 violated at device " +
                std::to_string(i));
        idx = idx * cfg.pair_count() + pair_index(a.d[i], a.e[i], cfg);
    }
    return idx * cfg.mu_count() + (a.mu - cfg.queue.mu0);
}

inline Action decode_action(long index, const EnvConfig& cfg) {
    if (index < 0 || index >= cfg.action_count())
        throw std::out_of_range("decode_action: index out of range");
    Action a;
    a.d.resize(cfg.n_devices);
    a.e.resize(cfg.n_devices);
    a.mu = cfg.queue.mu0 + static_cast<int>(index % cfg.mu_count());
    index /= cfg.mu_count();
    for (int i = cfg.n_devices - 1; i >= 0; --i) {
        auto [d, e] = decode_pair(static_cast<int>(index % cfg.pair_count()), cfg);
        a.d[i] = d;
        a.e[i] = e;
        index /= cfg.pair_count();
    }
    return a;
}

// True iff device (f, c) can serve pair p: enough stored energy and enough
// allocated CPU shares for the implied frequency.
inline bool pair_feasible(int p, const DeviceState& dev, const EnvConfig& cfg) {
    if (p == 0) return true;
    auto [d, e] = decode_pair(p, cfg);
    if (e > dev.c) return false;
    return cpu_frequency(e, d, cfg.physics) <=
           cfg.physics.sigma * static_cast<double>(dev.f);
}

// Feasibility of every action index in the given state. The all-zero-demand
// action is feasible in every state, so the mask is never all-false.
inline std::vector<std::uint8_t> feasible_mask(const SystemState& state,
                                               const EnvConfig& cfg) {
    const int P = cfg.pair_count();
    const int M = cfg.mu_count();
    std::vector<std::uint8_t> dev_ok(cfg.n_devices * P);
    for (int i = 0; i < cfg.n_devices; ++i)
        for (int p = 0; p < P; ++p)
            dev_ok[i * P + p] = pair_feasible(p, state.devices[i], cfg);

    std::vector<std::uint8_t> mask(cfg.action_count());
    const long combos = cfg.action_count() / M;
    for (long c = 0; c < combos; ++c) {
        long rem = c;
        bool ok = true;
        for (int i = cfg.n_devices - 1; i >= 0; --i) {
            ok = ok && dev_ok[i * P + rem % P];
            rem /= P;
        }
        std::fill_n(mask.begin() + c * M, M, static_cast<std::uint8_t>(ok));
    }
    return mask;
}

// L_tr = max_i nu * d_i / f_i^c over devices that train; 0 when none do.
inline double training_latency(const Action& a, const PhysicsConfig& p) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.d.size(); ++i) {
        if (a.d[i] < 1) continue;
        worst = std::max(worst, p.nu * a.d[i] / cpu_frequency(a.e[i], a.d[i], p));
    }
    return worst;
}

// D = sum(eta_i d_i) / sum(eta_i), the quality-weighted data average.
inline double weighted_data(const Action& a, const std::vector<double>& eta) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.d.size(); ++i) {
        num += eta[i] * a.d[i];
        den += eta[i];
    }
    return num / den;
}

// I = psi1 * D + psi2 / ln(1 + m). The miner term diverges at m = 0, so m is
// clamped to 1 inside the log.
inline double payment(double data_weighted, int m, const RewardWeights& w) {
    int mm = std::max(m, 1);
    return w.psi1 * data_weighted + w.psi2 / std::log(1.0 + mm);
}

struct RewardComponents {
    double data = 0.0;     // weighted data units D
    double energy = 0.0;   // total energy units E
    double latency = 0.0;  // seconds L
    double payment = 0.0;  // payment units I
};

inline double reward(const RewardComponents& c, const RewardWeights& w) {
    return w.alpha_d * c.data / w.d_norm - w.alpha_e * c.energy / w.e_norm -
           w.alpha_l * c.latency / w.l_norm - w.alpha_i * c.payment / w.i_norm;
}

struct StepOutcome {
    SystemState next_state;
    double reward = 0.0;
    RewardComponents components;
    long episode_data_so_far = 0;
    bool done = false;
};

// Initial state: CPU shares uniform on {0..F_max}, batteries full, queue
// occupancy drawn from the stationary law at the minimum block rate.
inline SystemState reset(const EnvConfig& cfg, std::mt19937_64& rng) {
    SystemState s;
    s.devices.resize(cfg.n_devices);
    std::uniform_int_distribution<int> fdist(0, cfg.f_max);
    for (auto& dev : s.devices) {
        dev.f = fdist(rng);
        dev.c = cfg.c_max;
    }
    s.m = sample_queue_state(utilization(cfg.queue.lambda, cfg.queue.mu0), rng);
    return s;
}

// Throws unless the action satisfies every constraint family in this state.
inline void check_feasible(const SystemState& state, const Action& a,
                           const EnvConfig& cfg) {
    if (static_cast<int>(a.d.size()) != cfg.n_devices ||
        static_cast<int>(a.e.size()) != cfg.n_devices)
        throw std::invalid_argument("step: action vector lengths != n_devices");
    if (a.mu < cfg.queue.mu0 || a.mu > cfg.queue.mu_max)
        throw std::invalid_argument("step: mu outside [mu0, mu_max]");
    for (int i = 0; i < cfg.n_devices; ++i) {
        const std::string dev = " at device " + std::to_string(i);
        if (a.d[i] < 0 || a.d[i] > cfg.d_max)
            throw std::invalid_argument("step: d outside [0, D_max]" + dev);
        if (a.e[i] < 0 || a.e[i] > cfg.e_max)
            throw std::invalid_argument("step: e outside [0, E_max]" + dev);
        if ((a.d[i] == 0) != (a.e[i] == 0))
            throw std::invalid_argument("step: d = 0 iff e = 0 violated" + dev);
        if (a.e[i] > state.devices[i].c)
            throw std::invalid_argument("step: energy demand exceeds battery" +
                                        dev);
        if (a.d[i] >= 1 &&
            cpu_frequency(a.e[i], a.d[i], cfg.physics) >
                cfg.physics.sigma * static_cast<double>(state.devices[i].f))
            throw std::invalid_argument("step: CPU frequency exceeds sigma*f" +
                                        dev);
    }
}

// One MDP transition. Reward components use the pre-transition queue state;
// the next queue state is re-drawn from stationarity at rho = lambda / mu of
// this action.
inline StepOutcome step(const SystemState& state, const Action& a,
                        long data_so_far, const EnvConfig& cfg,
                        std::mt19937_64& rng) {
    check_feasible(state, a, cfg);

    StepOutcome out;
    long raw_data = std::accumulate(a.d.begin(), a.d.end(), 0L);
    out.components.data = weighted_data(a, cfg.weights.eta);
    out.components.energy = std::accumulate(a.e.begin(), a.e.end(), 0.0);
    out.components.latency = training_latency(a, cfg.physics) +
                             transmission_latency(cfg.physics, raw_data > 0) +
                             block_latency(a.mu, cfg.queue, rng);
    out.components.payment = payment(out.components.data, state.m, cfg.weights);
    out.reward = reward(out.components, cfg.weights);

    out.next_state.devices.resize(cfg.n_devices);
    std::uniform_int_distribution<int> fdist(0, cfg.f_max);
    for (int i = 0; i < cfg.n_devices; ++i) {
        int harvested = 0;
        if (cfg.kappa > 0.0) {
            std::poisson_distribution<int> kdist(cfg.kappa);
            harvested = kdist(rng);
        }
        out.next_state.devices[i].c =
            std::min(cfg.c_max, state.devices[i].c - a.e[i] + harvested);
        out.next_state.devices[i].f = fdist(rng);
    }
    out.next_state.m = sample_queue_state(
        utilization(cfg.queue.lambda, static_cast<double>(a.mu)), rng);

    out.episode_data_so_far = data_so_far + raw_data;
    out.done = out.episode_data_so_far >= cfg.b_target;
    return out;
}

// Q-network input: per-device CPU and energy levels plus the clamped queue
// state, each scaled into [0, 1]. Length 2N + 1.
inline Eigen::VectorXd state_features(const SystemState& s,
                                      const EnvConfig& cfg) {
    Eigen::VectorXd x(2 * cfg.n_devices + 1);
    for (int i = 0; i < cfg.n_devices; ++i) {
        x[i] = static_cast<double>(s.devices[i].f) / cfg.f_max;
        x[cfg.n_devices + i] = static_cast<double>(s.devices[i].c) / cfg.c_max;
    }
    x[2 * cfg.n_devices] =
        static_cast<double>(std::min(s.m, cfg.queue.m_cap)) / cfg.queue.m_cap;
    return x;
}

}  // namespace bfl
