#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace fbsde {

// Philox 4x64 counter-based generator, 10 rounds (Salmon et al., Random123).
// Output for a given (key, counter) is a pure function, so per-path substreams
// keyed by (seed, path index) reproduce identically for any batch size or
// thread count. Matches numpy.random.Philox bit for bit.
struct Philox4x64 {
    std::array<std::uint64_t, 2> key{};
    std::array<std::uint64_t, 4> counter{};

    static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
    static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
    static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

    static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
        const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
        hi = static_cast<std::uint64_t>(p >> 64);
        lo = static_cast<std::uint64_t>(p);
    }

    static std::array<std::uint64_t, 4> block_at(std::array<std::uint64_t, 4> x,
                                                 const std::array<std::uint64_t, 2>& k) {
        std::uint64_t k0 = k[0];
        std::uint64_t k1 = k[1];
        for (int round = 0; round < 10; ++round) {
            std::uint64_t hi0, lo0, hi1, lo1;
            mulhilo(kMul0, x[0], hi0, lo0);
            mulhilo(kMul1, x[2], hi1, lo1);
            x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return x;
    }

    // Generates the block at the current counter, then advances the counter.
    std::array<std::uint64_t, 4> next_block() {
        const auto out = block_at(counter, key);
        if (++counter[0] == 0)
            if (++counter[1] == 0)
                if (++counter[2] == 0) ++counter[3];
        return out;
    }
};

// SplitMix64 finalizer, used to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream));
}

// Standard normal stream for one path: Box-Muller on Philox uniforms.
class NormalStream {
  public:
    NormalStream(std::uint64_t seed, std::uint64_t stream) {
        gen_.key = {seed, stream};
    }

    double next() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    // Uniform on (0,1].
    double next_uniform() {
        const auto w = gen_.next_block();
        return to_unit(w[0]);
    }

  private:
    static constexpr double kTwoPi = 6.283185307179586476925286766559;

    static double to_unit(std::uint64_t x) {
        // 53-bit mantissa, shifted into (0,1] so log() is always finite.
        return (static_cast<double>(x >> 11) + 1.0) * (1.0 / 9007199254740992.0);
    }

    void refill() {
        const auto w = gen_.next_block();
        box_muller(w[0], w[1], buf_[0], buf_[1]);
        box_muller(w[2], w[3], buf_[2], buf_[3]);
        pos_ = 0;
    }

    static void box_muller(std::uint64_t a, std::uint64_t b, double& z0, double& z1) {
        const double u1 = to_unit(a);
        const double u2 = static_cast<double>(b >> 11) * (1.0 / 9007199254740992.0);
        const double r = std::sqrt(-2.0 * std::log(u1));
        z0 = r * std::cos(kTwoPi * u2);
        z1 = r * std::sin(kTwoPi * u2);
    }

    Philox4x64 gen_;
    std::array<double, 4> buf_{};
    int pos_ = 4;
};

}  // namespace fbsde
