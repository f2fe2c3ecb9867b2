#pragma once

#include <cstdint>
#include <random>

namespace bfl {

// splitmix64 step; mixes the counter into a well-distributed 64-bit value.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent substreams derived from one master seed. Environment
// randomness, exploration randomness, and weight initialization each own a
// stream so that swapping the agent kind does not perturb the environment
// draws for a matched seed.
struct RngStreams {
    std::mt19937_64 env;
    std::mt19937_64 explore;
    std::mt19937_64 init;

    explicit RngStreams(std::uint64_t master_seed) {
        std::uint64_t s = master_seed;
        env.seed(splitmix64(s));
        explore.seed(splitmix64(s));
        init.seed(splitmix64(s));
    }
};

}  // namespace bfl
