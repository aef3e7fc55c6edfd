#ifndef GWSPEED_RNG_HPP
#define GWSPEED_RNG_HPP

#include <cstdint>

namespace gwspeed {

// SplitMix64 (Steele/Lea/Flood). Used both as the mixing function for
// deriving substream seeds and as the per-stream generator. Every stream
// is identified by a 64-bit seed; substreams are derived by hashing
// (seed, stream_id), so replica results are independent of worker count
// and of the order in which streams are consumed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stateless mix of two words, for seed derivation.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    std::uint64_t t = s;
    return splitmix64(t);
}

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~std::uint64_t{0}; }

    result_type operator()() { return splitmix64(state_); }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1), 53 random bits. Hand-rolled so the mapping from
    // bits to doubles is fixed, not implementation-defined.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // Multiply-shift; bias is < 2^-64 * n, negligible for our n.
        unsigned __int128 wide =
            static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Child stream derived from this stream's seed (not its state).
    static Rng substream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(mix_seed(seed, stream_id));
    }

private:
    std::uint64_t state_;
};

// Seed for replica `i` of an estimator run.
inline std::uint64_t replica_seed(std::uint64_t master_seed, std::uint64_t replica_index) {
    return mix_seed(master_seed, replica_index);
}

} // namespace gwspeed

#endif
