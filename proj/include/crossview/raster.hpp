#pragma once

#include <cstddef>
#include <vector>

namespace crossview {

// Dense C×H×W float grid stored channel-plane major, row major within a
// plane. One type serves images, latents, and feature maps; values are
// float32 in memory (matching the on-disk tensor format) while arithmetic
// on them is carried out in double and rounded once at the store.
struct Raster {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Raster() = default;
    Raster(int c, int h, int w, float fill = 0.0f);

    std::size_t plane_size() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    std::size_t size() const { return plane_size() * static_cast<std::size_t>(channels); }

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const Raster& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool all_finite() const;
};

// out = a*x + b*y elementwise; shapes must match. Accumulates in double.
Raster affine_combine(double a, const Raster& x, double b, const Raster& y);

// out = a*x + c elementwise.
Raster scale_add(double a, const Raster& x, double c = 0.0);

// Elementwise maximum absolute difference.
double max_abs_diff(const Raster& a, const Raster& b);

// Mean of one channel.
double channel_mean(const Raster& r, int c);

// Clamp every value into [lo, hi] (used before image export).
Raster clamp_raster(const Raster& r, float lo, float hi);

}  // namespace crossview
