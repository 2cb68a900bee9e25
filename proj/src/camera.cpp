#include "crossview/camera.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crossview {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

int camera_width(const CameraModel& cam) {
    return std::visit([](const auto& c) { return c.width; }, cam);
}

int camera_height(const CameraModel& cam) {
    return std::visit([](const auto& c) { return c.height; }, cam);
}

double wrap_angle(double a) {
    a = std::fmod(a + kPi, kTwoPi);
    if (a < 0) a += kTwoPi;
    return a - kPi;
}

RayDir pixel_to_ray(const CameraModel& cam, double u, double v) {
    const int w = camera_width(cam);
    const int h = camera_height(cam);
    if (!(u >= 0.0 && u < static_cast<double>(w)) || !(v >= 0.0 && v < static_cast<double>(h)))
        throw std::invalid_argument("pixel_to_ray: pixel out of range");

    if (const auto* pano = std::get_if<PanoramaCamera>(&cam)) {
        RayDir r;
        r.azimuth = kTwoPi * u / static_cast<double>(w) - kPi;
        r.elevation = pano->elev_top -
                      (v / static_cast<double>(h)) * (pano->elev_top - pano->elev_bottom);
        return r;
    }
    const auto& pin = std::get<PinholeCamera>(cam);
    // Tangent-plane coordinates: tx right, ty up, unit forward axis.
    const double tx = std::tan(pin.hfov * 0.5) * (2.0 * u / static_cast<double>(w) - 1.0);
    const double ty = std::tan(pin.vfov * 0.5) * (1.0 - 2.0 * v / static_cast<double>(h));
    RayDir r;
    r.azimuth = std::atan2(tx, 1.0);
    r.elevation = std::atan2(ty, std::hypot(tx, 1.0));
    return r;
}

std::optional<Vec2> ray_to_pixel(const CameraModel& cam, double azimuth, double elevation) {
    const int w = camera_width(cam);
    const int h = camera_height(cam);

    if (const auto* pano = std::get_if<PanoramaCamera>(&cam)) {
        const double az = wrap_angle(azimuth);
        if (elevation > pano->elev_top || elevation < pano->elev_bottom) return std::nullopt;
        Vec2 p;
        p.x = (az + kPi) / kTwoPi * static_cast<double>(w);
        p.y = (pano->elev_top - elevation) / (pano->elev_top - pano->elev_bottom) *
              static_cast<double>(h);
        if (p.x >= static_cast<double>(w)) p.x -= static_cast<double>(w);
        if (p.y < 0.0 || p.y >= static_cast<double>(h)) return std::nullopt;
        return p;
    }
    const auto& pin = std::get<PinholeCamera>(cam);
    if (std::abs(azimuth) >= kPi / 2.0) return std::nullopt;  // behind or beside the camera
    const double tx = std::tan(azimuth);
    const double ty = std::tan(elevation) * std::hypot(tx, 1.0);
    Vec2 p;
    p.x = (tx / std::tan(pin.hfov * 0.5) + 1.0) * 0.5 * static_cast<double>(w);
    p.y = (1.0 - ty / std::tan(pin.vfov * 0.5)) * 0.5 * static_cast<double>(h);
    if (p.x < 0.0 || p.x >= static_cast<double>(w) || p.y < 0.0 || p.y >= static_cast<double>(h))
        return std::nullopt;
    return p;
}

}  // namespace crossview
