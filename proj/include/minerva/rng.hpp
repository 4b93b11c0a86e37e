#pragma once

// Counter-based random numbers.
//
// Philox4x32-10 (Salmon et al., Random123). The 64-bit root seed is the key;
// the 128-bit counter is split into a 64-bit stream id (high half) and a
// 64-bit block index (low half). Every subsystem draws from its own
// (seed, stream) pair so no two consumers ever share a sequence, and the
// sequence is reproducible in any language that implements Philox.
//
// Output convention: each block yields four 32-bit words w0..w3, consumed as
// two 64-bit values (w1 << 32 | w0) then (w3 << 32 | w2).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace minerva {

using Philox4x32Block = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

/// One Philox4x32-10 block function evaluation.
constexpr Philox4x32Block philox4x32_10(Philox4x32Block ctr, Philox4x32Key key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kW0;
            key[1] += kW1;
        }
        const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Stream ids used across the library. Values are part of the reproducibility contract.
namespace streams {
inline constexpr std::uint64_t kGenerator = 1;
inline constexpr std::uint64_t kNetworkInit = 2;
inline constexpr std::uint64_t kHoldoutSplit = 3;
inline constexpr std::uint64_t kStage1Batches = 4;
inline constexpr std::uint64_t kStage2Batches = 5;
inline constexpr std::uint64_t kEvalBatches = 6;
inline constexpr std::uint64_t kKsgJitter = 7;
inline constexpr std::uint64_t kEvaluateSplit = 8;
inline constexpr std::uint64_t kRandomSubset = 9;
} // namespace streams

/// UniformRandomBitGenerator over Philox4x32-10.
class Philox {
public:
    using result_type = std::uint64_t;

    explicit Philox(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (lane_ == 0) {
            block_ = philox4x32_10({static_cast<std::uint32_t>(counter_),
                                    static_cast<std::uint32_t>(counter_ >> 32),
                                    static_cast<std::uint32_t>(stream_),
                                    static_cast<std::uint32_t>(stream_ >> 32)},
                                   key_);
            ++counter_;
        }
        const result_type out = (result_type{block_[2 * lane_ + 1]} << 32) | block_[2 * lane_];
        lane_ ^= 1;
        return out;
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n). Rejection sampling, no modulo bias.
    std::uint64_t index(std::uint64_t n) noexcept {
        if (n <= 1) {
            return 0;
        }
        const std::uint64_t limit = max() - (max() % n + 1) % n;
        std::uint64_t u = (*this)();
        while (u > limit) {
            u = (*this)();
        }
        return u % n;
    }

    /// Standard normal via Box-Muller (one value per call; the pair's second half is discarded).
    double normal() noexcept {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t stream() const noexcept { return stream_; }

private:
    Philox4x32Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Philox4x32Block block_{};
    int lane_ = 0;
};

} // namespace minerva
