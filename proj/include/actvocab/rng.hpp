#pragma once

// Seeded randomness. Streams are derived from (seed, tags...) by hashing, so
// any consumer (a batch at a given step, a trajectory at a given index) can
// be regenerated independently of what ran before it.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace actvocab {

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) : engine_(derive_seed(seed, tags)) {}

    std::uint64_t next_u64() { return engine_(); }
    /// [0, 1)
    double uniform();
    /// (0, 1), never exactly 0 or 1.
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller; no cached second value, so the engine
    /// state alone determines the stream.
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace actvocab
