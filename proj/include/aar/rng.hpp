/* Counter-based random number generator with splittable substreams.
 *
 * The generator is Philox-4x32 with 10 rounds: a small keyed block cipher
 * over a 128-bit counter.  Random output is the encryption of an
 * incrementing counter, so a stream is fully determined by its 64-bit key
 * and any number of statistically independent substreams can be derived by
 * hashing the parent key with a child index.  This is what makes runs
 * reproducible bit-for-bit regardless of how work is scheduled over
 * threads: every chain, every replicate and every parallel map iteration
 * owns a stream derived from indices, never from shared mutable state.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "aar/logspace.hpp"

namespace aar {

namespace detail {

// SplitMix64: bijective 64-bit finaliser, used for key derivation only.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Hash-combine a stream key with a child index into a fresh key.
inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t idx) {
    return splitmix64(key ^ splitmix64(idx + 0x632BE59BD9B4E019ULL));
}

}  // namespace detail

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : key_(detail::splitmix64(seed)) {}

    static Rng from_key(std::uint64_t key) {
        Rng r(0);
        r.key_ = key;
        return r;
    }

    std::uint64_t key() const { return key_; }

    // Independent substream; children of distinct indices (and of distinct
    // parents) never share counter/key pairs in practice.
    Rng child(std::uint64_t idx) const {
        return from_key(detail::derive_key(key_, idx));
    }

    // One Philox-4x32 block: encrypt a 128-bit counter under a 64-bit key.
    // Exposed for known-answer tests.
    static std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                                   std::array<std::uint32_t, 2> key) {
        constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;  // key schedule increments
        constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
        constexpr std::uint32_t kMul0 = 0xD2511F53u;   // round multipliers
        constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

    std::uint64_t next_u64() {
        if (have_ == 0) refill();
        const std::uint64_t v = buf_[2 - have_];
        --have_;
        return v;
    }

    // Uniform on the open interval (0,1); never returns an endpoint.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Unbiased integer in [0, n) by Lemire's multiply-shift rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw numeric_contract_error("uniform_int with n == 0");
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t cutoff = (0 - n) % n;
            while (lo < cutoff) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller.  The sine companion is discarded so
    // the draw count per call is fixed, keeping streams easy to reason
    // about.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate = 1.0) { return -std::log(uniform()) / rate; }

    // Gamma(shape, scale) via Marsaglia-Tsang squeeze; shapes below one are
    // boosted through the Gamma(shape+1) representation.
    double gamma(double shape, double scale = 1.0) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    // Poisson by inverse multiplication for small means; larger means are
    // split in half recursively (a sum of independent Poissons).
    long poisson(double mean) {
        if (mean < 0.0 || std::isnan(mean))
            throw numeric_contract_error("poisson with invalid mean");
        if (mean == 0.0) return 0;
        if (mean > 30.0) return poisson(mean / 2.0) + poisson(mean - mean / 2.0);
        const double limit = std::exp(-mean);
        long k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

  private:
    void refill() {
        std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(ctr_lo_), static_cast<std::uint32_t>(ctr_lo_ >> 32),
            static_cast<std::uint32_t>(ctr_hi_), static_cast<std::uint32_t>(ctr_hi_ >> 32)};
        const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(key_),
                                                  static_cast<std::uint32_t>(key_ >> 32)};
        const auto out = philox4x32(ctr, key);
        buf_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
        buf_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
        have_ = 2;
        if (++ctr_lo_ == 0) ++ctr_hi_;
    }

    std::uint64_t key_;
    std::uint64_t ctr_lo_ = 0;
    std::uint64_t ctr_hi_ = 0;
    std::array<std::uint64_t, 2> buf_ = {0, 0};
    int have_ = 0;
};

// Per-step substream bundle: hashing one salt drawn from the parent stream
// with the replicate index gives each parallel draw its own stream while
// keeping results independent of evaluation order.
inline Rng substream(std::uint64_t salt, std::uint64_t idx) {
    return Rng::from_key(detail::derive_key(salt, idx));
}

}  // namespace aar
