#pragma once

#include <cstdint>
#include <random>

#include "crossview/raster.hpp"

namespace crossview {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard, and the normal sampler is a hand-rolled
// Box-Muller transform, so identical seeds yield identical sequences on
// every platform (std::normal_distribution would not guarantee that).
//
// A single Rng instance is owned by one thread at a time; parallel work
// derives child generators with child().
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1): top 53 bits of the engine output.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; pairs are cached.
    double normal();

    // Deterministic child stream for task `index` (seed XOR task index).
    static Rng child(std::uint64_t seed, std::uint64_t index) { return Rng(seed ^ index); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// C×H×W raster of i.i.d. standard normal draws, filled in channel-major
// row-major order from `rng`.
Raster randn_raster(int channels, int height, int width, Rng& rng);

}  // namespace crossview
