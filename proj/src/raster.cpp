#include "crossview/raster.hpp"

#include <cmath>
#include <stdexcept>

namespace crossview {

Raster::Raster(int c, int h, int w, float fill) : channels(c), height(h), width(w) {
    if (c <= 0 || h <= 0 || w <= 0)
        throw std::invalid_argument("Raster: dimensions must be positive");
    data.assign(size(), fill);
}

bool Raster::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Raster affine_combine(double a, const Raster& x, double b, const Raster& y) {
    if (!x.same_shape(y))
        throw std::invalid_argument("affine_combine: shape mismatch");
    Raster out(x.channels, x.height, x.width);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        out.data[i] = static_cast<float>(a * static_cast<double>(x.data[i]) +
                                         b * static_cast<double>(y.data[i]));
    return out;
}

Raster scale_add(double a, const Raster& x, double c) {
    Raster out(x.channels, x.height, x.width);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        out.data[i] = static_cast<float>(a * static_cast<double>(x.data[i]) + c);
    return out;
}

double max_abs_diff(const Raster& a, const Raster& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

double channel_mean(const Raster& r, int c) {
    if (c < 0 || c >= r.channels)
        throw std::invalid_argument("channel_mean: channel out of range");
    double s = 0.0;
    const std::size_t plane = r.plane_size();
    const float* p = r.data.data() + static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    return s / static_cast<double>(plane);
}

Raster clamp_raster(const Raster& r, float lo, float hi) {
    Raster out = r;
    for (float& v : out.data) v = std::min(hi, std::max(lo, v));
    return out;
}

}  // namespace crossview
