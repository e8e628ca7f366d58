#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace corrgee {

// Philox 4x64-10 counter-based generator.  Streams are cheap: (seed, stream)
// is the key, the block counter starts at zero, so any replicate can own an
// independent substream that is reproducible regardless of execution order.
class PhiloxRng {
  public:
    PhiloxRng(std::uint64_t seed, std::uint64_t stream = 0) : key_{seed, stream} {}

    std::uint64_t next_u64() {
        if (have_ == 0) {
            block_ = philox(counter_, key_);
            increment(counter_);
            have_ = 4;
        }
        return block_[4 - have_--];
    }

    // Uniform on (0,1): 53-bit mantissa, zero nudged up to keep logs finite.
    double next_uniform() {
        const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    // Standard normal via Box-Muller (pairs are cached).
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // One full 4-word block for a given counter, exposed for known-answer tests.
    static std::array<std::uint64_t, 4> philox(std::array<std::uint64_t, 4> ctr,
                                               std::array<std::uint64_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += 0x9E3779B97F4A7C15ull;  // Weyl constants
            key[1] += 0xBB67AE8584CAA73Bull;
        }
        return ctr;
    }

  private:
    static std::array<std::uint64_t, 4> single_round(const std::array<std::uint64_t, 4>& ctr,
                                                     const std::array<std::uint64_t, 2>& key) {
        const auto mulhilo = [](std::uint64_t a, std::uint64_t b, std::uint64_t& hi) {
            const unsigned __int128 prod = static_cast<unsigned __int128>(a) * b;
            hi = static_cast<std::uint64_t>(prod >> 64);
            return static_cast<std::uint64_t>(prod);
        };
        std::uint64_t hi0, hi1;
        const std::uint64_t lo0 = mulhilo(0xD2E7470EE14C6C93ull, ctr[0], hi0);
        const std::uint64_t lo1 = mulhilo(0xCA5A826395121157ull, ctr[2], hi1);
        return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }

    static void increment(std::array<std::uint64_t, 4>& ctr) {
        for (auto& limb : ctr) {
            if (++limb != 0) break;
        }
    }

    std::array<std::uint64_t, 2> key_;
    std::array<std::uint64_t, 4> counter_{0, 0, 0, 0};
    std::array<std::uint64_t, 4> block_{};
    int have_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace corrgee
