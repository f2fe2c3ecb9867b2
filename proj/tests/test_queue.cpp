#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "bfl/queue.hpp"
#include "stats_support.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("utilization is lambda over mu") {
    CHECK_THAT(bfl::utilization(3.0, 5.0), WithinRel(0.6, 1e-12));
    CHECK_THAT(bfl::utilization(3.0, 3.0001), WithinAbs(0.99997, 1e-4));
    CHECK_THROWS_AS(bfl::utilization(3.0, 3.0), std::invalid_argument);
    CHECK_THROWS_AS(bfl::utilization(0.0, 5.0), std::invalid_argument);
    CHECK_THROWS_AS(bfl::utilization(3.0, -1.0), std::invalid_argument);
}

TEST_CASE("stationary probability (1-rho) rho^m") {
    CHECK_THAT(bfl::stationary_prob(0.6, 0), WithinRel(0.4, 1e-12));
    CHECK_THAT(bfl::stationary_prob(0.6, 2), WithinRel(0.144, 1e-12));
    CHECK_THAT(bfl::stationary_prob(0.0, 0), WithinRel(1.0, 1e-12));
    CHECK_THROWS_AS(bfl::stationary_prob(1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(bfl::stationary_prob(-0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS(bfl::stationary_prob(0.5, -1), std::invalid_argument);
}

TEST_CASE("stationary probabilities have closed-form partial sums") {
    for (double rho : {0.0, 0.1, 0.3, 0.6, 0.9, 0.99}) {
        for (int cap : {0, 5, 20, 60}) {
            double sum = 0.0;
            for (int m = 0; m <= cap; ++m) sum += bfl::stationary_prob(rho, m);
            CHECK_THAT(sum, WithinAbs(1.0 - std::pow(rho, cap + 1), 1e-12));
        }
    }
}

TEST_CASE("queue-state sampler follows the stationary law") {
    std::mt19937_64 rng(42);
    CHECK(bfl::sample_queue_state(0.0, rng) == 0);
    CHECK_THROWS_AS(bfl::sample_queue_state(1.0, rng), std::invalid_argument);

    const double rho = 0.6;
    const long n = 1'000'000;
    const int bins = 16;  // m = 0..15 plus tail
    std::vector<long> observed(bins + 1, 0);
    double sum = 0.0;
    for (long i = 0; i < n; ++i) {
        int m = bfl::sample_queue_state(rho, rng);
        observed[std::min(m, bins)]++;
        sum += m;
    }
    std::vector<double> expected;
    for (int m = 0; m < bins; ++m)
        expected.push_back(n * bfl::stationary_prob(rho, m));
    expected.push_back(n * std::pow(rho, bins));  // tail mass
    CHECK(test_stats::chi_square_ok(observed, expected));
    CHECK_THAT(sum / n, WithinAbs(rho / (1.0 - rho), 0.02));
}

TEST_CASE("mining delay is exponential with mean 1/(mu-lambda)") {
    std::mt19937_64 rng(7);
    CHECK_THROWS_AS(bfl::sample_mining_delay(3.0, 3.0, rng),
                    std::invalid_argument);

    const long n = 1'000'000;
    double sum5 = 0.0, sum10 = 0.0;
    bool all_positive = true;
    for (long i = 0; i < n; ++i) {
        double d = bfl::sample_mining_delay(5.0, 3.0, rng);
        all_positive = all_positive && d > 0.0;
        sum5 += d;
        sum10 += bfl::sample_mining_delay(10.0, 3.0, rng);
    }
    CHECK(all_positive);
    CHECK_THAT(sum5 / n, WithinAbs(0.5, 0.01));
    CHECK_THAT(sum10 / n, WithinAbs(1.0 / 7.0, 0.005));
}

TEST_CASE("mining delay passes KS against the exponential CDF") {
    std::mt19937_64 rng(11);
    const std::size_t n = 100'000;
    for (double mu : {5.0, 7.0, 10.0}) {
        double rate = mu - 3.0;
        std::vector<double> samples(n);
        for (auto& s : samples) s = bfl::sample_mining_delay(mu, 3.0, rng);
        double d = test_stats::ks_statistic(
            samples, [rate](double x) { return 1.0 - std::exp(-rate * x); });
        CHECK(d < test_stats::ks_critical_001(n));
    }
}

TEST_CASE("mean mining delay decreases strictly in mu") {
    std::mt19937_64 rng(13);
    const long n = 1'000'000;
    double prev_mean = 0.0, prev_se = 0.0;
    bool first = true;
    for (double mu : {5.0, 6.0, 8.0, 10.0}) {
        std::vector<double> samples(n);
        for (auto& s : samples) s = bfl::sample_mining_delay(mu, 3.0, rng);
        double m = test_stats::mean(samples);
        double se = test_stats::stddev(samples) / std::sqrt(double(n));
        if (!first) CHECK(prev_mean - m > 3.0 * (prev_se + se));
        prev_mean = m;
        prev_se = se;
        first = false;
    }
}

TEST_CASE("block latency adds the constant delays") {
    bfl::QueueConfig cfg;  // defaults: lambda=3, mu0=5, l_cr=l_bp=1
    std::mt19937_64 rng(21);

    SECTION("zero constant delays reduce to the mining delay") {
        bfl::QueueConfig bare = cfg;
        bare.l_cr = bare.l_bp = 0.0;
        std::mt19937_64 a(5), b(5);
        for (int i = 0; i < 100; ++i)
            CHECK(bfl::block_latency(5.0, bare, a) ==
                  bfl::sample_mining_delay(5.0, 3.0, b));
    }

    SECTION("empirical mean at defaults") {
        const long n = 1'000'000;
        double sum = 0.0;
        for (long i = 0; i < n; ++i) sum += bfl::block_latency(5.0, cfg, rng);
        CHECK_THAT(sum / n, WithinAbs(2.5, 0.01));
    }

    SECTION("mu below mu0 is rejected") {
        CHECK_THROWS_AS(bfl::block_latency(4.0, cfg, rng), std::invalid_argument);
        CHECK_THROWS_AS(bfl::block_latency(11.0, cfg, rng),
                        std::invalid_argument);
    }

    SECTION("samples never fall below l_cr + l_bp") {
        for (int i = 0; i < 10'000; ++i)
            CHECK(bfl::block_latency(10.0, cfg, rng) >= cfg.l_cr + cfg.l_bp);
    }
}

TEST_CASE("queue config invariants") {
    bfl::QueueConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    bfl::QueueConfig bad = cfg;
    bad.mu0 = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.mu_max = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.l_cr = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.m_cap = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
