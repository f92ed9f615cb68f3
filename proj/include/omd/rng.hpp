#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace omd {

// Deterministic RNG with fully specified derived draws. The bit source is
// std::mt19937_64; uniform/normal transforms are written out explicitly so
// draw sequences can be replayed by an independent script.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Inclusive integer range; floor of a scaled uniform01 draw.
    int uniform_int(int lo, int hi) {
        int span = hi - lo + 1;
        int v = static_cast<int>(std::floor(uniform01() * span));
        if (v >= span) v = span - 1;
        return lo + v;
    }

    // Box-Muller; consumes exactly two uniform01 draws, spare discarded.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    // Normal truncated to +/- 2 sigma by rejection; BERT/ViT init convention.
    double truncated_normal(double stddev) {
        for (;;) {
            double v = normal(0.0, stddev);
            if (std::fabs(v) <= 2.0 * stddev) return v;
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace omd
