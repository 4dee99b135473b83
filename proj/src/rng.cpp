#include "lmmsel/rng.hpp"

#include <cmath>
#include <numbers>

namespace lmmsel {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(prod >> 32);
    lo = static_cast<std::uint32_t>(prod);
}

}  // namespace

Philox4x32::Block Philox4x32::bijection(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {
    counter_[2] = static_cast<std::uint32_t>(stream);
    counter_[3] = static_cast<std::uint32_t>(stream >> 32);
}

Philox4x32::result_type Philox4x32::operator()() {
    if (used_ == 4) {
        buffer_ = bijection(counter_, key_);
        if (++counter_[0] == 0) ++counter_[1];
        used_ = 0;
    }
    return buffer_[static_cast<std::size_t>(used_++)];
}

double Philox4x32::uniform() {
    const std::uint64_t a = (*this)() >> 5;  // 27 bits
    const std::uint64_t b = (*this)() >> 6;  // 26 bits
    const double bits = static_cast<double>((a << 26) | b);
    return (bits + 0.5) * 0x1.0p-53;
}

double Philox4x32::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Philox4x32::below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t x = (static_cast<std::uint64_t>((*this)()) << 32) | (*this)();
        if (x < limit) return x % bound;
    }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    const Philox4x32::Key key{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32)};
    const Philox4x32::Block out = Philox4x32::bijection(
        {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5EEDu, 0x5EEDu}, key);
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace lmmsel
