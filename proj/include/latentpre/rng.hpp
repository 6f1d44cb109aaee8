#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace latentpre {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable label hash (FNV-1a) so substreams survive recompilation and platform
// changes, unlike std::hash.
inline std::uint64_t label_hash(std::string_view label) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

// One --seed fans out to per-stage and per-record substreams.
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view stage,
                                    std::uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ label_hash(stage)) ^ index);
}

// All sampling goes through this wrapper rather than <random> distributions,
// whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, bound)
    std::uint64_t next_below(std::uint64_t bound) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    // index into an unnormalized weight vector by CDF inversion
    std::size_t next_categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = next_double() * total;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    // symmetric Dirichlet(1): normalized exponentials
    std::vector<double> next_dirichlet1(std::size_t k) {
        std::vector<double> v(k);
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            double u = next_double();
            if (u <= 0.0) u = 0x1.0p-53;
            v[i] = -std::log(u);
            total += v[i];
        }
        for (double& x : v) x /= total;
        return v;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace latentpre
