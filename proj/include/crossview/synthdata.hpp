#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossview/camera.hpp"
#include "crossview/raster.hpp"

namespace crossview {

// Procedural scene on a flat ground plane: a gently contrasting checker and
// a lattice-aligned value-noise overlay (exactly reproducible under bilinear
// resampling when the lattice lands on satellite pixels), plus an optional
// road stripe and axis-aligned boxes. The world frame has its origin at the
// center of the satellite raster, east = +u, north = -v, z up; all scene
// geometry is in meters.
struct SceneBox {
    double center_east = 0.0;
    double center_north = 0.0;
    double size = 4.0;    // square footprint side
    double height = 5.0;  // top of the box above the ground plane
    float color[3] = {0.5f, 0.5f, 0.5f};
};

struct SceneSpec {
    std::uint64_t seed = 0;
    SatMeta meta;  // calibration the poses are expressed against

    double checker_period = 8.0;  // meters per half-period
    float color_a[3] = {0.47f, 0.49f, 0.45f};
    float color_b[3] = {0.49f, 0.47f, 0.47f};

    double noise_amp = 0.15;      // value-noise amplitude per channel
    double noise_lattice = 4.0;   // meters between lattice nodes

    bool has_road = false;
    double road_heading = 0.0;  // radians clockwise from north
    double road_width = 5.0;
    float road_color[3] = {0.22f, 0.22f, 0.24f};

    std::vector<SceneBox> boxes;

    float sky_color[3] = {0.53f, 0.78f, 0.92f};
};

// Deterministic scene from a seed. difficulty: "flat" (ground plane only),
// "road" (adds the stripe), "boxes" (road plus 3-8 boxes).
SceneSpec make_scene(std::uint64_t seed, const std::string& difficulty);

// Ground-plane color at a world point (checker + noise + road).
void scene_ground_color(const SceneSpec& s, double east, double north, float out[3]);

// North-up orthographic RGB render at meta's scale. OpenMP-parallel.
Raster render_satellite(const SceneSpec& s, const SatMeta& meta);
Raster render_satellite_serial(const SceneSpec& s, const SatMeta& meta);

// Ray-cast RGB render from the ground camera: boxes and ground plane by
// nearest positive intersection in world space, sky above the horizon.
// Shares pixel_to_ray with the projection code but intersects in 3D vector
// form, so it is an independent oracle for the trigonometric projections.
Raster render_ground(const SceneSpec& s, const RelativePose& pose, const CameraModel& cam);
Raster render_ground_serial(const SceneSpec& s, const RelativePose& pose, const CameraModel& cam);

}  // namespace crossview
