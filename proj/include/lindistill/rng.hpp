#pragma once

#include <cstdint>

namespace lindistill {

// Counter-based generator. Every draw is a pure function of
// (seed, stream, counter), so any sub-sequence can be regenerated
// without replaying the earlier ones.
//
//   key   = mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019))
//   draw  = mix64(key + (counter + 1) * 0x9E3779B97F4A7C15)
//
// mix64 is the splitmix64 finalizer. Uniform doubles use the top 53 bits.
class Rng {
public:
    static constexpr const char* kAlgorithm = "splitmix64-counter";

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    // [0, 1)
    double uniform();
    // Standard normal by Box-Muller; consumes two draws.
    double normal();
    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix64(std::uint64_t x);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace lindistill
