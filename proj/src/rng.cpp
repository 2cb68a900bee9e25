#include "crossview/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crossview {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite; u2 in [0, 1).
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

Raster randn_raster(int channels, int height, int width, Rng& rng) {
    if (channels <= 0 || height <= 0 || width <= 0)
        throw std::invalid_argument("randn_raster: dimensions must be positive");
    Raster out(channels, height, width);
    for (float& v : out.data) v = static_cast<float>(rng.normal());
    return out;
}

}  // namespace crossview
