#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace bfl {

// Blockchain modeled as an M/M/1 queue with constant cross-verification and
// block-propagation delays on top of the stochastic mining delay.
struct QueueConfig {
    double lambda = 3.0;  // transaction arrival rate, tx/s
    int mu0 = 5;          // minimum block generation rate, blocks/s
    int mu_max = 10;      // maximum block generation rate, blocks/s
    double l_cr = 1.0;    // cross-verification delay, s
    double l_bp = 1.0;    // block-propagation delay, s
    int m_cap = 20;       // queue-state cap used in observations/encodings

    void validate() const {
        if (lambda <= 0.0)
            throw std::invalid_argument("queue.lambda must be > 0");
        if (static_cast<double>(mu0) <= lambda)
            throw std::invalid_argument(
                "queue.mu0 must exceed queue.lambda (queue stability)");
        if (mu_max < mu0)
            throw std::invalid_argument("queue.mu_max must be >= queue.mu0");
        if (l_cr < 0.0 || l_bp < 0.0)
            throw std::invalid_argument("queue.l_cr and queue.l_bp must be >= 0");
        if (m_cap < 1)
            throw std::invalid_argument("queue.m_cap must be >= 1");
    }
};

// rho = lambda / mu, strictly in (0, 1) for a stable queue.
inline double utilization(double lambda, double mu) {
    if (lambda <= 0.0 || mu <= 0.0)
        throw std::invalid_argument("utilization: rates must be positive");
    if (mu <= lambda)
        throw std::invalid_argument(
            "utilization: mu must exceed lambda (unstable queue)");
    return lambda / mu;
}

// P_m = (1 - rho) * rho^m, the stationary occupancy law.
inline double stationary_prob(double rho, int m) {
    if (rho < 0.0 || rho >= 1.0)
        throw std::invalid_argument("stationary_prob: rho must be in [0, 1)");
    if (m < 0)
        throw std::invalid_argument("stationary_prob: m must be >= 0");
    return (1.0 - rho) * std::pow(rho, m);
}

// Draws m from the stationary law. The raw draw is unbounded; observers clamp
// at m_cap.
inline int sample_queue_state(double rho, std::mt19937_64& rng) {
    if (rho < 0.0 || rho >= 1.0)
        throw std::invalid_argument("sample_queue_state: rho must be in [0, 1)");
    if (rho == 0.0) return 0;
    // P(m) = (1-rho) rho^m is geometric with success probability 1-rho.
    std::geometric_distribution<int> dist(1.0 - rho);
    return dist(rng);
}

// Mining delay: exponential with mean 1 / (mu - lambda).
inline double sample_mining_delay(double mu, double lambda,
                                  std::mt19937_64& rng) {
    if (mu <= lambda)
        throw std::invalid_argument(
            "sample_mining_delay: mu must exceed lambda");
    std::exponential_distribution<double> dist(mu - lambda);
    return dist(rng);
}

// L_blk = l_cr + l_bp + mining delay.
inline double block_latency(double mu, const QueueConfig& cfg,
                            std::mt19937_64& rng) {
    if (mu < cfg.mu0 || mu > cfg.mu_max)
        throw std::invalid_argument("block_latency: mu=" + std::to_string(mu) +
                                    " outside [mu0, mu_max]");
    return cfg.l_cr + cfg.l_bp + sample_mining_delay(mu, cfg.lambda, rng);
}

}  // namespace bfl
