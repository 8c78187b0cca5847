#pragma once

#include <cstdint>

namespace bard {

/// splitmix64 finalizer; a bijective 64-bit mix.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of stream `index` under `master`. Depends only on the pair, so
/// replication results do not depend on how work is scheduled.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Uniform on [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based draw: the `counter`-th uniform of stream `seed`.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
    return to_unit(stream_seed(seed, counter));
}

/*
 * xoshiro256** generator. Distribution helpers are implemented here rather
 * than through <random> distributions so that draws are identical across
 * standard library implementations.
 */
class Rng {
   public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()();

    double uniform() { return to_unit((*this)()); }
    bool bernoulli(double p) { return uniform() < p; }
    /// Exponential waiting time with the given rate.
    double exponential(double rate);

   private:
    std::uint64_t s_[4];
};

}  // namespace bard
