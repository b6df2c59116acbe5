#pragma once

// Counter-based normal variates. Philox4x32-10 keyed by
// a master seed; the counter carries (stream id, block index), so every draw is
// a pure function of (seed, stream, index) and needs no sequential state.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace smlab {

class Philox4x32 {
public:
    using block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    block operator()(std::uint64_t stream, std::uint64_t index) const noexcept {
        block ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                  static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeylA;
            key[1] += kWeylB;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMulA = 0xD2511F53u;
    static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    static constexpr std::uint32_t kWeylB = 0xBB67AE85u;

    static block single_round(const block& c, const std::array<std::uint32_t, 2>& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    std::array<std::uint32_t, 2> key_;
};

/// splitmix64 finalizer; spreads user seeds (often small integers) over the key space.
constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Standard normal stream addressed by (master seed, substream id, draw index).
///
/// Each Philox block yields two 53-bit uniforms which Box-Muller turns into two
/// normals, so draws 2j and 2j+1 share block j.
class NormalStream {
public:
    NormalStream(std::uint64_t master_seed, std::uint64_t substream) noexcept
        : gen_(mix_seed(master_seed)), stream_(substream) {}

    double operator()(std::uint64_t index) const noexcept {
        const auto b = gen_(stream_, index >> 1);
        const double u1 = to_unit_open(b[0], b[1]);
        const double u2 = to_unit_open(b[2], b[3]);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return (index & 1u) ? r * std::sin(angle) : r * std::cos(angle);
    }

    /// Fills out[i] = draw(first + i).
    template <class Span>
    void fill(std::uint64_t first, Span&& out) const noexcept {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)(first + i);
    }

    std::uint64_t substream() const noexcept { return stream_; }

private:
    // (0, 1], never 0 so the log is finite.
    static double to_unit_open(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
        return (static_cast<double>(bits & ((1ull << 53) - 1)) + 1.0) * 0x1.0p-53;
    }

    Philox4x32 gen_;
    std::uint64_t stream_;
};

}  // namespace smlab
