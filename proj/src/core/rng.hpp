#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fscs {

// Deterministic RNG: raw mt19937_64 output is pinned by the standard, and the
// uniform/normal transforms are done by hand so results do not depend on the
// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, standard normal
    double normal();

    // [0, n)
    int64_t index(int64_t n) { return static_cast<int64_t>(uniform() * static_cast<double>(n)); }

    template <typename V>
    void shuffle(V& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = index(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fscs
