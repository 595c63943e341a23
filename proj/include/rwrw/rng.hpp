#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rwrw/errors.hpp"

namespace rwrw {

// splitmix64, used for seeding and for hashing stream ids.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ generator. All simulation randomness flows through this type so
// runs are reproducible from (master seed, stream id) regardless of platform
// or worker count. No libstdc++ distributions are used anywhere.
class Rng {
  public:
    Rng() : Rng(0, 0) {}

    // Stream construction: the pair (seed, stream) indexes a family of
    // generators that are de-correlated by construction. Replica i of an
    // experiment uses stream id derived from i, never from the worker id.
    Rng(uint64_t seed, uint64_t stream) {
        uint64_t s = seed ^ (0x9e6c63d0876a9a35ULL * (stream + 1));
        for (auto& w : state_) w = splitmix64(s);
    }

    static Rng derive(uint64_t seed, uint64_t tag1, uint64_t tag2 = 0, uint64_t tag3 = 0) {
        uint64_t s = seed;
        uint64_t a = splitmix64(s) ^ tag1;
        uint64_t b = splitmix64(a) ^ tag2;
        uint64_t c = splitmix64(b) ^ tag3;
        return Rng(splitmix64(c), splitmix64(c));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n) by rejection-free multiply-shift (n << 2^64,
    // modulo bias < 2^-32 for the n used here).
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential() {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return -std::log(u);
    }

    double normal() {
        // Marsaglia polar method; second value discarded.
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    // Poisson(lambda) by Knuth's product method, splitting large rates into
    // chunks so the e^{-lambda} product never underflows.
    int64_t poisson(double lambda) {
        if (lambda < 0.0) throw usage_error("poisson: negative rate");
        if (lambda == 0.0) return 0;
        int64_t total = 0;
        while (lambda > 25.0) {
            total += poisson_small(25.0);
            lambda -= 25.0;
        }
        return total + poisson_small(lambda);
    }

    // Poisson(lambda) conditioned on being >= 1, by CDF inversion. Stable for
    // arbitrarily small lambda where plain rejection would stall.
    int64_t poisson_ge1(double lambda) {
        if (lambda <= 0.0) throw domain_error("poisson_ge1: rate must be positive");
        if (lambda > 30.0) {
            // Conditioning is vacuous to ~1e-13; rejection accepts immediately.
            for (;;) {
                int64_t k = poisson(lambda);
                if (k >= 1) return k;
            }
        }
        const double pc = -std::expm1(-lambda);  // P(Z >= 1)
        double u = uniform() * pc;
        double term = lambda * std::exp(-lambda);  // P(Z = 1)
        double cum = term;
        int64_t k = 1;
        while (u > cum && k < 400) {
            ++k;
            term *= lambda / static_cast<double>(k);
            cum += term;
        }
        return k;
    }

    // Index draw from unnormalized nonnegative weights.
    size_t discrete(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) throw domain_error("discrete: all weights zero");
        double u = uniform() * total;
        double cum = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            cum += weights[i];
            if (u < cum) return i;
        }
        return weights.size() - 1;
    }

    // Draw with a precomputed inclusive cumulative sum (last entry = total).
    size_t discrete_cdf(std::span<const double> cdf) {
        const double total = cdf.back();
        double u = uniform() * total;
        size_t lo = 0, hi = cdf.size() - 1;
        while (lo < hi) {
            size_t mid = (lo + hi) / 2;
            if (cdf[mid] <= u) lo = mid + 1; else hi = mid;
        }
        return lo;
    }

    // Multinomial(count; weights/sum) by independent cell draws; counts here
    // are small (Poisson-sized), so per-trial draws beat BTPE-style samplers.
    std::vector<int64_t> multinomial(int64_t count, std::span<const double> weights) {
        std::vector<int64_t> out(weights.size(), 0);
        if (count == 0) return out;
        std::vector<double> cdf(weights.size());
        double cum = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] < 0.0) throw usage_error("multinomial: negative weight");
            cum += weights[i];
            cdf[i] = cum;
        }
        if (cum <= 0.0) throw domain_error("multinomial: all weights zero with positive count");
        for (int64_t t = 0; t < count; ++t) ++out[discrete_cdf(cdf)];
        return out;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    int64_t poisson_small(double lambda) {
        const double limit = std::exp(-lambda);
        int64_t k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }

    std::array<uint64_t, 4> state_;
};

// Named stream tags keep replica / pairing / phase substreams disjoint.
namespace stream_tag {
constexpr uint64_t kReplica = 0x01;
constexpr uint64_t kSharedNoise = 0x02;  // pair index -> identical shared substream
constexpr uint64_t kEnvA = 0x03;
constexpr uint64_t kEnvRef = 0x04;
constexpr uint64_t kRates = 0x05;
constexpr uint64_t kBootstrap = 0x06;
constexpr uint64_t kOracle = 0x07;
}  // namespace stream_tag

inline Rng replica_rng(uint64_t master_seed, uint64_t replica_index, uint64_t phase = 0) {
    return Rng::derive(master_seed, stream_tag::kReplica, replica_index, phase);
}

}  // namespace rwrw
