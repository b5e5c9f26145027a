#pragma once

#include <cstdint>
#include <cmath>

namespace vanishlab {

// Counter-based pseudo-random generator (Philox4x32-10).
//
// Every stream is identified by a 64-bit key; the state advances a 128-bit
// counter, so streams never collide and a generator can be reconstructed
// from (key, counter) alone.  Sub-streams for Monte-Carlo trials are derived
// with derive_seed(master, trial), which makes trial results independent of
// execution order and safe to compute in parallel.
class Rng {
public:
    explicit Rng(std::uint64_t stream_key) noexcept
        : key0_(static_cast<std::uint32_t>(stream_key)),
          key1_(static_cast<std::uint32_t>(stream_key >> 32)) {}

    // splitmix64-style avalanche of (master, index) into a fresh stream key.
    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
        std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static Rng for_trial(std::uint64_t master, std::uint64_t trial) noexcept {
        return Rng(derive_seed(master, trial));
    }

    // Child stream with an independent key; the parent state is not consumed.
    Rng fork(std::uint64_t label) const noexcept {
        const std::uint64_t key = (static_cast<std::uint64_t>(key1_) << 32) | key0_;
        return Rng(derive_seed(key ^ 0xA5A5A5A55A5A5A5Aull, label));
    }

    std::uint32_t next_u32() noexcept {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on (0, 1]; never returns 0, so logs are always finite.
    double uniform01() noexcept {
        const std::uint64_t bits = next_u64() >> 11;  // 53 random bits
        return static_cast<double>(bits + 1) * 0x1.0p-53;
    }

    // Uniform on [-tau, tau], exactly sign-symmetric and never exactly 0.
    double uniform_symmetric(double tau) noexcept {
        const double magnitude = tau * uniform01();
        return (next_u32() & 1u) ? magnitude : -magnitude;
    }

    // Standard normal via the Marsaglia polar method (inverse-free).
    double gaussian() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    // One Philox4x32-10 block for the given counter/key, exposed for testing
    // against the published known-answer vectors.
    static void philox4x32_10(const std::uint32_t ctr[4], const std::uint32_t key[2],
                              std::uint32_t out[4]) noexcept {
        std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
        std::uint32_t k0 = key[0], k1 = key[1];
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                k0 += 0x9E3779B9u;
                k1 += 0xBB67AE85u;
            }
            const std::uint64_t p0 = 0xD2511F53ull * c0;
            const std::uint64_t p1 = 0xCD9E8D57ull * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n0 = hi1 ^ c1 ^ k0;
            const std::uint32_t n1 = lo1;
            const std::uint32_t n2 = hi0 ^ c3 ^ k1;
            const std::uint32_t n3 = lo0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
        }
        out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
    }

private:
    void refill() noexcept {
        const std::uint32_t ctr[4] = {ctr0_, ctr1_, ctr2_, ctr3_};
        const std::uint32_t key[2] = {key0_, key1_};
        philox4x32_10(ctr, key, buf_);
        buf_pos_ = 0;
        if (++ctr0_ == 0 && ++ctr1_ == 0 && ++ctr2_ == 0) ++ctr3_;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t ctr0_ = 0, ctr1_ = 0, ctr2_ = 0, ctr3_ = 0;
    std::uint32_t buf_[4] = {0, 0, 0, 0};
    int buf_pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace vanishlab
