#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace rsmppi {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/**
 * Counter-based random stream.
 *
 * The n-th output is mix64(key + n * golden), so a stream is fully described
 * by its key and position. Child streams are derived with split(), which
 * hashes a tag into a fresh key; the same (seed, tag path) always yields the
 * same numbers regardless of which thread or in which order it is consumed.
 *
 * Satisfies UniformRandomBitGenerator, but normal() and uniform() below are
 * preferred over <random> distributions because their output is specified
 * here rather than by the standard library vendor.
 */
class Stream
{
  public:
    using result_type = std::uint64_t;

    explicit constexpr Stream(std::uint64_t seed) noexcept : key_(mix64(seed ^ kSeedSalt)) {}

    /// Child stream identified by `tag`. Does not advance this stream.
    [[nodiscard]] constexpr Stream split(std::uint64_t tag) const noexcept
    {
        return Stream(Key{mix64(key_ ^ mix64(tag + kTagSalt))});
    }

    template <typename... Tags>
    [[nodiscard]] constexpr Stream split(std::uint64_t tag, Tags... rest) const noexcept
    {
        return split(tag).split(static_cast<std::uint64_t>(rest)...);
    }

    constexpr result_type operator()() noexcept { return mix64(key_ + (++counter_) * kGolden); }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal by Box-Muller; the second variate is cached.
    double normal() noexcept
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // 1 - uniform() lies in (0, 1], keeping log() finite.
        const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
        const double phi = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(phi);
        has_spare_ = true;
        return r * std::cos(phi);
    }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }

  private:
    struct Key
    {
        std::uint64_t value;
    };
    explicit constexpr Stream(Key k) noexcept : key_(k.value) {}

    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
    static constexpr std::uint64_t kSeedSalt = 0x5851f42d4c957f2dull;
    static constexpr std::uint64_t kTagSalt = 0x632be59bd9b4e019ull;

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stable 64-bit FNV-1a over bytes, used for config fingerprints and string tags.
constexpr std::uint64_t fnv1a(std::string_view bytes) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace rsmppi
