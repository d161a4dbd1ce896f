#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sdm {

// Deterministic random source. Every consumer of randomness in the library
// pulls from one of these; independent concerns (init, dropout, pseudoabsence
// sampling, data shuffling) each get their own named substream derived from
// the master seed, so adding draws to one concern never perturbs another.
//
// Uniform doubles are built from the top 53 bits of the raw generator output
// instead of std::uniform_real_distribution, which keeps the byte-for-byte
// sequence independent of the standard library in use.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    // Derived generator for a named concern. Same (seed, name) -> same stream.
    Rng stream(std::string_view name) const {
        // FNV-1a over the seed bytes then the name.
        std::uint64_t h = 14695981039346656037ull;
        auto mix = [&h](std::uint64_t byte) {
            h ^= byte;
            h *= 1099511628211ull;
        };
        for (int i = 0; i < 8; ++i) mix((seed_ >> (8 * i)) & 0xff);
        for (char c : name) mix(static_cast<unsigned char>(c));
        return Rng(h);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();  // rejection keeps it unbiased
        return x % n;
    }

    // Fisher-Yates; deterministic across platforms for a fixed stream.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

}  // namespace sdm
