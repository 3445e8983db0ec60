#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace bsdelab {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// Stateless: every draw is a pure function of (key, counter).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit constexpr Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    constexpr Counter operator()(Counter ctr) const noexcept {
        Key key = key_;
        for (int r = 0; r < 10; ++r) {
            ctr = round(ctr, key);
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static constexpr Counter round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    Key key_;
};

/// Uniform in the open interval (0, 1) from two 32-bit words (53-bit mantissa).
inline double open_uniform(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Two independent standard normals keyed by (seed, a, b, c, stream) via Box-Muller.
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint32_t a, std::uint32_t b,
                                         std::uint32_t c, std::uint32_t stream) noexcept {
    const auto out = Philox4x32{seed}({a, b, c, stream});
    const double u1 = open_uniform(out[0], out[1]);
    const double u2 = open_uniform(out[2], out[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(angle), r * std::sin(angle)};
}

/// Uniform (0,1) keyed the same way, used for sampling test tuples.
inline double keyed_uniform(std::uint64_t seed, std::uint32_t a, std::uint32_t b,
                            std::uint32_t stream) noexcept {
    const auto out = Philox4x32{seed}({a, b, 0xFFFFFFFFu, stream});
    return open_uniform(out[0], out[1]);
}

}  // namespace bsdelab
