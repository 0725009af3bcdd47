#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace gsde {

/// Philox4x32-10 block function (Salmon et al., SC'11).
///
/// A keyed bijection on 128-bit counters: the same (counter, key) always
/// yields the same 128 output bits, so any draw can be reproduced without
/// replaying the stream that precedes it.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    static constexpr int kRounds = 10;

    static constexpr Counter apply(Counter ctr, Key key)
    {
        for (int r = 0; r < kRounds; ++r) {
            if (r > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

/// Draw kinds; each owns a disjoint slice of the channel word.
enum class Channel : std::uint32_t {
    wiener = 1,
    jump_time = 2,
    user = 15,
};

/// Counter-based substream keyed by (master seed, path index).
///
/// A draw is addressed by (step, channel, sub, block): `step` is the base
/// time step (or jump ordinal), `sub` the sub-interval inside that step, and
/// `block` selects successive pairs of variates.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t path_index)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}
        , path_lo_(static_cast<std::uint32_t>(path_index))
        , path_hi_(static_cast<std::uint32_t>(path_index >> 32))
    {
    }

    /// Two uniforms in the open interval (0, 1), 53 bits each.
    std::array<double, 2> uniforms(std::uint32_t step, Channel channel, std::uint32_t sub,
                                   std::uint32_t block) const
    {
        const auto out = Philox4x32::apply({step, channel_word(channel, sub, block), path_lo_, path_hi_},
                                           key_);
        return {to_unit(out[0], out[1]), to_unit(out[2], out[3])};
    }

    /// Two independent standard normals (Box-Muller on one Philox block).
    std::array<double, 2> normals(std::uint32_t step, Channel channel, std::uint32_t sub,
                                  std::uint32_t block) const
    {
        const auto u = uniforms(step, channel, sub, block);
        const double r = std::sqrt(-2.0 * std::log(u[0]));
        const double phi = 2.0 * std::numbers::pi * u[1];
        return {r * std::cos(phi), r * std::sin(phi)};
    }

private:
    static constexpr std::uint32_t channel_word(Channel channel, std::uint32_t sub, std::uint32_t block)
    {
        // kind:4 | sub:16 | block:12
        return (static_cast<std::uint32_t>(channel) << 28) | ((sub & 0xFFFFu) << 12) | (block & 0xFFFu);
    }

    static constexpr double to_unit(std::uint32_t hi, std::uint32_t lo)
    {
        const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint32_t path_lo_;
    std::uint32_t path_hi_;
};

} // namespace gsde
