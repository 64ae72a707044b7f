#ifndef DPG_RNG_HPP
#define DPG_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace dpg {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seeded generator with hand-pinned uniform/gaussian mappings so that a run's
// random stream depends only on the seed, not on library internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    // Independent substream: one master seed fans out to env/noise/minibatch/
    // channel streams without coupling their draw counts.
    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ull + 0x5851f42d4c957f2dull));
    }

    std::uint64_t next_u64() { return gen_(); }

    // [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the second value of each pair is cached.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform(); // (0,1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // [0,n). Modulo bias is ~n/2^64, irrelevant at replay-buffer scale.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

} // namespace dpg

#endif
