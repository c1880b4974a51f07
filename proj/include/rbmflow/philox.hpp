#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace rbmflow {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The output is a pure function of (counter, key), so draws can be
/// addressed directly by (seed, replica, step) without any sequential state.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        ctr = round(ctr, key);
        for (int r = 1; r < 10; ++r) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
            ctr = round(ctr, key);
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// What a block of random words is used for; keeps streams for different
/// purposes disjoint under the same (seed, replica, step).
enum class RngPurpose : std::uint32_t {
    Increment = 0,
    StartPoint = 1,
    Sampling = 2,
};

/// Stream of Gaussian and uniform variates keyed by (master seed, replica).
/// Draw number `index` within a step is addressed directly.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint32_t replica)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          replica_(replica) {}

    /// Two uniforms in [0, 1) with 53-bit resolution.
    std::array<double, 2> uniforms(std::uint64_t step, std::uint32_t block,
                                   RngPurpose purpose = RngPurpose::Increment) const {
        const Philox4x32::Counter ctr{
            block | (static_cast<std::uint32_t>(purpose) << 24),
            static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), replica_};
        const auto w = Philox4x32::generate(ctr, key_);
        return {to_unit(w[0], w[1]), to_unit(w[2], w[3])};
    }

    /// Fills `out` with independent standard normals for the given step
    /// (Box-Muller, two normals per Philox block).
    void normals(std::uint64_t step, std::span<double> out,
                 RngPurpose purpose = RngPurpose::Increment) const {
        std::uint32_t block = 0;
        for (std::size_t i = 0; i < out.size(); i += 2, ++block) {
            const auto u = uniforms(step, block, purpose);
            const double radius = std::sqrt(-2.0 * std::log1p(-u[0]));
            const double angle = 2.0 * std::numbers::pi * u[1];
            out[i] = radius * std::cos(angle);
            if (i + 1 < out.size()) out[i + 1] = radius * std::sin(angle);
        }
    }

    std::uint32_t replica() const { return replica_; }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = (static_cast<std::uint64_t>(hi >> 5) << 26) | (lo >> 6);
        return static_cast<double>(bits) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint32_t replica_;
};

}  // namespace rbmflow
