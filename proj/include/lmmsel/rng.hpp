#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace lmmsel {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The 64-bit
/// seed is the key; `stream` occupies the upper half of the counter, so
/// distinct streams never overlap. Output is identical on every platform.
class Philox4x32 {
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit Philox4x32(std::uint64_t seed, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform();
    /// Standard normal (Box-Muller; the second variate is cached).
    double normal();
    /// Uniform integer in [0, bound), bound > 0, without modulo bias.
    std::uint64_t below(std::uint64_t bound);

    /// The raw ten-round bijection.
    static Block bijection(Block counter, Key key);

private:
    Key key_;
    Block counter_{};
    Block buffer_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Seed of replicate `index` derived from `base` through the same bijection,
/// so per-replicate streams are independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace lmmsel
