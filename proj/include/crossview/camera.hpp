#pragma once

#include <optional>
#include <variant>

namespace crossview {

// Equirectangular panorama: azimuth spans [-pi, pi) across the width
// (u = 0 maps to -pi, u = width/2 to 0), elevation interpolates linearly
// from elev_top at v = 0 down to elev_bottom at v = height.
struct PanoramaCamera {
    int width = 512;
    int height = 128;
    double elev_top = 0.7853981633974483;     // +45 deg
    double elev_bottom = -0.7853981633974483; // -45 deg
};

// Pinhole frustum: the center pixel looks along azimuth 0 / elevation 0;
// azimuth and elevation are recovered from tangent-plane coordinates.
struct PinholeCamera {
    int width = 512;
    int height = 128;
    double hfov = 1.5707963267948966;  // 90 deg
    double vfov = 0.39269908169872414; // 22.5 deg
};

using CameraModel = std::variant<PanoramaCamera, PinholeCamera>;

int camera_width(const CameraModel& cam);
int camera_height(const CameraModel& cam);

// Camera-local ray direction. Azimuth is measured clockwise from the
// camera's forward direction (so +azimuth looks right), elevation upward
// from the horizontal.
struct RayDir {
    double azimuth = 0.0;
    double elevation = 0.0;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// Pixel (u, v) -> camera-local ray. Continuous pixel convention: the sample
// point of pixel (u, v) is exactly (u, v); valid input range is
// [0, width) x [0, height). Out-of-range input throws.
RayDir pixel_to_ray(const CameraModel& cam, double u, double v);

// Inverse of pixel_to_ray. Returns nullopt when the ray is outside the
// camera's field of view (or behind a pinhole camera).
std::optional<Vec2> ray_to_pixel(const CameraModel& cam, double azimuth, double elevation);

// Ground camera pose relative to the satellite raster: position in
// satellite pixels (u east/right, v south/down), yaw clockwise from north,
// and camera height above the ground plane in meters (> 0).
struct RelativePose {
    double sat_u = 0.0;
    double sat_v = 0.0;
    double yaw = 0.0;
    double cam_height = 2.0;
};

// Satellite raster calibration.
struct SatMeta {
    double meters_per_pixel = 0.5;
    int width = 256;
    int height = 256;
};

// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

}  // namespace crossview
