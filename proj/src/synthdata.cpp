#include "crossview/synthdata.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "crossview/rng.hpp"

namespace crossview {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Lattice node value in [-1, 1], stateless in (seed, ix, iy, channel).
double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy, int c) {
    std::uint64_t h = seed;
    h = splitmix64(h ^ static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ull);
    h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4full);
    h = splitmix64(h ^ static_cast<std::uint64_t>(c + 1));
    return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

// Piecewise-bilinear value noise over a square lattice in meters.
double value_noise(const SceneSpec& s, double east, double north, int c) {
    const double gx = east / s.noise_lattice;
    const double gy = north / s.noise_lattice;
    const double fx0 = std::floor(gx);
    const double fy0 = std::floor(gy);
    const auto ix = static_cast<std::int64_t>(fx0);
    const auto iy = static_cast<std::int64_t>(fy0);
    const double fx = gx - fx0;
    const double fy = gy - fy0;
    const double v00 = lattice_value(s.seed, ix, iy, c);
    const double v01 = lattice_value(s.seed, ix + 1, iy, c);
    const double v10 = lattice_value(s.seed, ix, iy + 1, c);
    const double v11 = lattice_value(s.seed, ix + 1, iy + 1, c);
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
}

struct WorldFrame {
    double mpp, cu, cv;
    double east(double u) const { return (u - cu) * mpp; }
    double north(double v) const { return (cv - v) * mpp; }
    double u_of(double east) const { return cu + east / mpp; }
    double v_of(double north) const { return cv - north / mpp; }
};

WorldFrame frame_of(const SatMeta& meta) {
    return {meta.meters_per_pixel, static_cast<double>(meta.width) / 2.0,
            static_cast<double>(meta.height) / 2.0};
}

bool in_footprint(const SceneBox& b, double east, double north) {
    return std::abs(east - b.center_east) <= b.size * 0.5 &&
           std::abs(north - b.center_north) <= b.size * 0.5;
}

// Slab intersection with the axis-aligned box [0, height] in z. Returns the
// entry distance or nothing. Rays starting inside are treated as misses.
bool intersect_box(const SceneBox& b, const double p[3], const double d[3], double* t_hit) {
    double tlo = 1e-9, thi = std::numeric_limits<double>::infinity();
    const double lo[3] = {b.center_east - b.size * 0.5, b.center_north - b.size * 0.5, 0.0};
    const double hi[3] = {b.center_east + b.size * 0.5, b.center_north + b.size * 0.5, b.height};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (p[a] < lo[a] || p[a] > hi[a]) return false;
            continue;
        }
        double t1 = (lo[a] - p[a]) / d[a];
        double t2 = (hi[a] - p[a]) / d[a];
        if (t1 > t2) std::swap(t1, t2);
        tlo = std::max(tlo, t1);
        thi = std::min(thi, t2);
        if (tlo > thi) return false;
    }
    *t_hit = tlo;
    return true;
}

void ground_pixel_color(const SceneSpec& s, const RelativePose& pose, const CameraModel& cam,
                        const WorldFrame& wf, int x, int y, float out[3]) {
    const RayDir ray = pixel_to_ray(cam, static_cast<double>(x), static_cast<double>(y));
    const double az = pose.yaw + ray.azimuth;
    const double ce = std::cos(ray.elevation);
    const double d[3] = {ce * std::sin(az), ce * std::cos(az), std::sin(ray.elevation)};
    const double p[3] = {wf.east(pose.sat_u), wf.north(pose.sat_v), pose.cam_height};

    double best_t = std::numeric_limits<double>::infinity();
    const SceneBox* best_box = nullptr;
    for (const SceneBox& b : s.boxes) {
        double t;
        if (intersect_box(b, p, d, &t) && t < best_t) {
            best_t = t;
            best_box = &b;
        }
    }
    if (d[2] < -1e-12) {
        const double t = -p[2] / d[2];
        if (t < best_t) {
            scene_ground_color(s, p[0] + t * d[0], p[1] + t * d[1], out);
            return;
        }
    }
    if (best_box) {
        out[0] = best_box->color[0];
        out[1] = best_box->color[1];
        out[2] = best_box->color[2];
        return;
    }
    out[0] = s.sky_color[0];
    out[1] = s.sky_color[1];
    out[2] = s.sky_color[2];
}

}  // namespace

void scene_ground_color(const SceneSpec& s, double east, double north, float out[3]) {
    const auto pe = static_cast<std::int64_t>(std::floor(east / s.checker_period));
    const auto pn = static_cast<std::int64_t>(std::floor(north / s.checker_period));
    const float* base = ((pe + pn) & 1) == 0 ? s.color_a : s.color_b;
    float c[3] = {base[0], base[1], base[2]};

    if (s.has_road) {
        // Distance from the line through the origin with the road heading.
        const double dist =
            std::abs(east * std::cos(s.road_heading) - north * std::sin(s.road_heading));
        if (dist <= s.road_width * 0.5) {
            c[0] = s.road_color[0];
            c[1] = s.road_color[1];
            c[2] = s.road_color[2];
        }
    }
    for (int ch = 0; ch < 3; ++ch) {
        const double v =
            static_cast<double>(c[ch]) + s.noise_amp * value_noise(s, east, north, ch);
        out[ch] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
    }
}

SceneSpec make_scene(std::uint64_t seed, const std::string& difficulty) {
    if (difficulty != "flat" && difficulty != "road" && difficulty != "boxes")
        throw std::invalid_argument("make_scene: difficulty must be flat, road, or boxes");
    Rng rng(splitmix64(seed ^ 0x5ce57e5eull));
    SceneSpec s;
    s.seed = seed;
    s.meta = SatMeta{};  // 0.5 m/px, 256x256

    const double base = rng.uniform_range(0.42, 0.55);
    for (int c = 0; c < 3; ++c) {
        const double tint = rng.uniform_range(-0.03, 0.03);
        s.color_a[c] = static_cast<float>(base + tint + 0.01);
        s.color_b[c] = static_cast<float>(base + tint - 0.01);
    }
    s.checker_period = 8.0;
    s.noise_amp = rng.uniform_range(0.12, 0.18);
    s.noise_lattice = 4.0;
    for (int c = 0; c < 3; ++c)
        s.sky_color[c] = static_cast<float>(
            std::min(1.0, std::max(0.0, s.sky_color[c] + rng.uniform_range(-0.05, 0.05))));

    if (difficulty == "road" || difficulty == "boxes") {
        s.has_road = true;
        s.road_heading = rng.uniform_range(-1.5, 1.5);
        s.road_width = rng.uniform_range(4.0, 7.0);
    }
    if (difficulty == "boxes") {
        const int n = 3 + static_cast<int>(rng.uniform_range(0.0, 6.0));
        for (int i = 0; i < n; ++i) {
            SceneBox b;
            // Keep footprints clear of the raster center where ground
            // cameras are usually placed.
            const double ang = rng.uniform_range(-3.14159, 3.14159);
            const double rad = rng.uniform_range(10.0, 50.0);
            b.center_east = rad * std::sin(ang);
            b.center_north = rad * std::cos(ang);
            b.size = rng.uniform_range(3.0, 8.0);
            b.height = rng.uniform_range(3.0, 10.0);
            for (float& ch : b.color) ch = static_cast<float>(rng.uniform_range(0.25, 0.85));
            s.boxes.push_back(b);
        }
    }
    return s;
}

Raster render_satellite(const SceneSpec& s, const SatMeta& meta) {
    Raster out(3, meta.height, meta.width);
    const WorldFrame wf = frame_of(meta);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < meta.height; ++y) {
        for (int x = 0; x < meta.width; ++x) {
            const double east = wf.east(x);
            const double north = wf.north(y);
            // Topmost surface wins; overlapping boxes resolve by height.
            const SceneBox* top = nullptr;
            for (const SceneBox& b : s.boxes)
                if (in_footprint(b, east, north) && (!top || b.height > top->height)) top = &b;
            float c[3];
            if (top) {
                c[0] = top->color[0];
                c[1] = top->color[1];
                c[2] = top->color[2];
            } else {
                scene_ground_color(s, east, north, c);
            }
            for (int ch = 0; ch < 3; ++ch) out.at(ch, y, x) = c[ch];
        }
    }
    return out;
}

Raster render_satellite_serial(const SceneSpec& s, const SatMeta& meta) {
    Raster out(3, meta.height, meta.width);
    const WorldFrame wf = frame_of(meta);
    for (int y = 0; y < meta.height; ++y)
        for (int x = 0; x < meta.width; ++x) {
            const double east = wf.east(x);
            const double north = wf.north(y);
            const SceneBox* top = nullptr;
            for (const SceneBox& b : s.boxes)
                if (in_footprint(b, east, north) && (!top || b.height > top->height)) top = &b;
            float c[3];
            if (top) {
                c[0] = top->color[0];
                c[1] = top->color[1];
                c[2] = top->color[2];
            } else {
                scene_ground_color(s, east, north, c);
            }
            for (int ch = 0; ch < 3; ++ch) out.at(ch, y, x) = c[ch];
        }
    return out;
}

Raster render_ground(const SceneSpec& s, const RelativePose& pose, const CameraModel& cam) {
    if (pose.cam_height <= 0.0)
        throw std::invalid_argument("render_ground: cam_height must be positive");
    const int w = camera_width(cam), h = camera_height(cam);
    Raster out(3, h, w);
    const WorldFrame wf = frame_of(s.meta);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float c[3];
            ground_pixel_color(s, pose, cam, wf, x, y, c);
            for (int ch = 0; ch < 3; ++ch) out.at(ch, y, x) = c[ch];
        }
    }
    return out;
}

Raster render_ground_serial(const SceneSpec& s, const RelativePose& pose,
                            const CameraModel& cam) {
    if (pose.cam_height <= 0.0)
        throw std::invalid_argument("render_ground_serial: cam_height must be positive");
    const int w = camera_width(cam), h = camera_height(cam);
    Raster out(3, h, w);
    const WorldFrame wf = frame_of(s.meta);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float c[3];
            ground_pixel_color(s, pose, cam, wf, x, y, c);
            for (int ch = 0; ch < 3; ++ch) out.at(ch, y, x) = c[ch];
        }
    return out;
}

}  // namespace crossview
