#include "crossview/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace crossview {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinElevation = 1e-6;  // rays flatter than this never reach a plane
constexpr double kMinW = 1e-8;          // homogeneous w cutoff
constexpr double kMinRange = 1e-9;      // overhead center singularity

// Largest/smallest singular value of a 3x3 matrix via Jacobi iteration on
// M^T M (symmetric positive semidefinite).
void symmetric_eigenvalues_3x3(double a[3][3], double out[3]) {
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-15) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-18) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    out[0] = a[0][0];
    out[1] = a[1][1];
    out[2] = a[2][2];
}

}  // namespace

Homography Homography::translation(double tx, double ty) {
    Homography h;
    h.m[0][2] = tx;
    h.m[1][2] = ty;
    return h;
}

Homography Homography::normalized() const {
    const double w = m[2][2];
    if (std::abs(w) < kMinW)
        throw std::invalid_argument("Homography::normalized: m[2][2] is ~0");
    Homography out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.m[i][j] = m[i][j] / w;
    return out;
}

Homography Homography::inverse() const {
    const double(&a)[3][3] = m;
    double c[3][3];
    c[0][0] = a[1][1] * a[2][2] - a[1][2] * a[2][1];
    c[0][1] = a[0][2] * a[2][1] - a[0][1] * a[2][2];
    c[0][2] = a[0][1] * a[1][2] - a[0][2] * a[1][1];
    c[1][0] = a[1][2] * a[2][0] - a[1][0] * a[2][2];
    c[1][1] = a[0][0] * a[2][2] - a[0][2] * a[2][0];
    c[1][2] = a[0][2] * a[1][0] - a[0][0] * a[1][2];
    c[2][0] = a[1][0] * a[2][1] - a[1][1] * a[2][0];
    c[2][1] = a[0][1] * a[2][0] - a[0][0] * a[2][1];
    c[2][2] = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    const double det = a[0][0] * c[0][0] + a[0][1] * c[1][0] + a[0][2] * c[2][0];
    if (std::abs(det) < 1e-14)
        throw std::invalid_argument("Homography::inverse: matrix is singular");
    Homography out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.m[i][j] = c[i][j] / det;
    return out.normalized();
}

std::optional<Vec2> Homography::apply(double x, double y) const {
    const double w = m[2][0] * x + m[2][1] * y + m[2][2];
    if (w <= kMinW) return std::nullopt;
    Vec2 p;
    p.x = (m[0][0] * x + m[0][1] * y + m[0][2]) / w;
    p.y = (m[1][0] * x + m[1][1] * y + m[1][2]) / w;
    return p;
}

double Homography::condition_number() const {
    double mtm[3][3] = {};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) mtm[i][j] += m[k][i] * m[k][j];
    double ev[3];
    symmetric_eigenvalues_3x3(mtm, ev);
    double lo = ev[0], hi = ev[0];
    for (double e : ev) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(hi / lo);
}

std::array<double, 8> Homography::params() const {
    return {m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1]};
}

Homography Homography::from_params(const std::array<double, 8>& p) {
    Homography h;
    h.m[0][0] = p[0];
    h.m[0][1] = p[1];
    h.m[0][2] = p[2];
    h.m[1][0] = p[3];
    h.m[1][1] = p[4];
    h.m[1][2] = p[5];
    h.m[2][0] = p[6];
    h.m[2][1] = p[7];
    h.m[2][2] = 1.0;
    return h;
}

Homography homography_apply(const Homography& a, const Homography& b) {
    Homography out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a.m[i][k] * b.m[k][j];
            out.m[i][j] = s;
        }
    return out.normalized();
}

SampleGrid::SampleGrid(int h, int w) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("SampleGrid: dimensions must be positive");
    x.assign(size(), 0.0f);
    y.assign(size(), 0.0f);
    valid.assign(size(), 0);
}

double SampleGrid::valid_fraction() const {
    if (valid.empty()) return 0.0;
    std::size_t n = 0;
    for (std::uint8_t v : valid) n += v;
    return static_cast<double>(n) / static_cast<double>(valid.size());
}

std::optional<Vec2> project_ground_to_sat(const CameraModel& cam, const RelativePose& pose,
                                          const SatMeta& meta, double u_g, double v_g, double h) {
    const RayDir ray = pixel_to_ray(cam, u_g, v_g);
    // The plane at relative height h is reachable only if the ray points the
    // same way (up for h > 0, down for h < 0) and is not near-horizontal.
    if (std::abs(ray.elevation) < kMinElevation) return std::nullopt;
    if ((h > 0) != (ray.elevation > 0)) return std::nullopt;
    if (h == 0.0) return std::nullopt;

    const double range = h / std::tan(ray.elevation);  // > 0 by the sign check
    const double azimuth_world = pose.yaw + ray.azimuth;
    const double de = range * std::sin(azimuth_world);  // east, meters
    const double dn = range * std::cos(azimuth_world);  // north, meters

    Vec2 p;
    p.x = pose.sat_u + de / meta.meters_per_pixel;
    p.y = pose.sat_v - dn / meta.meters_per_pixel;
    if (p.x < 0.0 || p.x >= static_cast<double>(meta.width) || p.y < 0.0 ||
        p.y >= static_cast<double>(meta.height))
        return std::nullopt;
    return p;
}

std::optional<Vec2> sat_to_ground_pixel(const CameraModel& cam, const RelativePose& pose,
                                        const SatMeta& meta, double u_s, double v_s) {
    const double de = (u_s - pose.sat_u) * meta.meters_per_pixel;
    const double dn = (pose.sat_v - v_s) * meta.meters_per_pixel;
    const double range = std::hypot(de, dn);
    if (range < kMinRange) return std::nullopt;  // directly underneath the camera
    const double azimuth_world = std::atan2(de, dn);
    const double azimuth = wrap_angle(azimuth_world - pose.yaw);
    const double elevation = std::atan2(-pose.cam_height, range);
    return ray_to_pixel(cam, azimuth, elevation);
}

SampleGrid ground_view_grid(const CameraModel& cam, const RelativePose& pose, const SatMeta& meta,
                            double h) {
    const int height = camera_height(cam);
    const int width = camera_width(cam);
    SampleGrid g(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            if (const auto uv = project_ground_to_sat(cam, pose, meta, x, y, h)) {
                g.x[i] = static_cast<float>(uv->x);
                g.y[i] = static_cast<float>(uv->y);
                g.valid[i] = 1;
            }
        }
    return g;
}

SampleGrid overhead_grid(const CameraModel& cam, const RelativePose& pose, const SatMeta& meta,
                         int crop) {
    if (crop <= 0) throw std::invalid_argument("overhead_grid: crop must be positive");
    SampleGrid g(crop, crop);
    const double c0 = (static_cast<double>(crop) - 1.0) / 2.0;
    for (int cy = 0; cy < crop; ++cy)
        for (int cx = 0; cx < crop; ++cx) {
            const double u_s = pose.sat_u + (static_cast<double>(cx) - c0);
            const double v_s = pose.sat_v + (static_cast<double>(cy) - c0);
            const std::size_t i = static_cast<std::size_t>(cy) * crop + cx;
            if (const auto gp = sat_to_ground_pixel(cam, pose, meta, u_s, v_s)) {
                g.x[i] = static_cast<float>(gp->x);
                g.y[i] = static_cast<float>(gp->y);
                g.valid[i] = 1;
            }
        }
    return g;
}

SampleGrid satellite_crop_grid(const RelativePose& pose, const SatMeta& meta, int crop) {
    if (crop <= 0) throw std::invalid_argument("satellite_crop_grid: crop must be positive");
    SampleGrid g(crop, crop);
    const double c0 = (static_cast<double>(crop) - 1.0) / 2.0;
    const double cs = std::cos(pose.yaw);
    const double sn = std::sin(pose.yaw);
    for (int cy = 0; cy < crop; ++cy)
        for (int cx = 0; cx < crop; ++cx) {
            const double ox = static_cast<double>(cx) - c0;
            const double oy = static_cast<double>(cy) - c0;
            // Window offsets rotated by +yaw in screen coordinates, so the
            // window content is the satellite rotated by -yaw: the cell at
            // the top of the window shows what lies ahead of the camera.
            const double u = pose.sat_u + ox * cs - oy * sn;
            const double v = pose.sat_v + ox * sn + oy * cs;
            if (u < 0.0 || u >= static_cast<double>(meta.width) || v < 0.0 ||
                v >= static_cast<double>(meta.height))
                continue;
            const std::size_t i = static_cast<std::size_t>(cy) * crop + cx;
            g.x[i] = static_cast<float>(u);
            g.y[i] = static_cast<float>(v);
            g.valid[i] = 1;
        }
    return g;
}

SampleGrid homography_grid(const Homography& h, int height, int width) {
    SampleGrid g(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const auto p = h.apply(static_cast<double>(x), static_cast<double>(y));
            if (!p) continue;
            if (p->x < 0.0 || p->x >= static_cast<double>(width) || p->y < 0.0 ||
                p->y >= static_cast<double>(height))
                continue;
            g.x[i] = static_cast<float>(p->x);
            g.y[i] = static_cast<float>(p->y);
            g.valid[i] = 1;
        }
    return g;
}

SampleGrid compose_grid(const SampleGrid& g, const Homography& h, int src_height, int src_width) {
    SampleGrid out(g.height, g.width);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.valid[i]) continue;
        const auto p = h.apply(static_cast<double>(g.x[i]), static_cast<double>(g.y[i]));
        if (!p) continue;
        if (p->x < 0.0 || p->x >= static_cast<double>(src_width) || p->y < 0.0 ||
            p->y >= static_cast<double>(src_height))
            continue;
        out.x[i] = static_cast<float>(p->x);
        out.y[i] = static_cast<float>(p->y);
        out.valid[i] = 1;
    }
    return out;
}

Raster warp(const Raster& src, const SampleGrid& grid, float fill) {
    if (src.size() == 0) throw std::invalid_argument("warp: empty source");
    Raster out(src.channels, grid.height, grid.width, fill);
    const int sw = src.width, sh = src.height;
#pragma omp parallel for schedule(static)
    for (int oy = 0; oy < grid.height; ++oy) {
        for (int ox = 0; ox < grid.width; ++ox) {
            const std::size_t gi = static_cast<std::size_t>(oy) * grid.width + ox;
            if (!grid.valid[gi]) continue;
            double sx = grid.x[gi], sy = grid.y[gi];
            sx = std::min(std::max(sx, 0.0), static_cast<double>(sw - 1));
            sy = std::min(std::max(sy, 0.0), static_cast<double>(sh - 1));
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, sw - 1);
            const int y1 = std::min(y0 + 1, sh - 1);
            const double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < src.channels; ++c) {
                const double top = (1.0 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1);
                const double bot = (1.0 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1);
                out.at(c, oy, ox) = static_cast<float>((1.0 - fy) * top + fy * bot);
            }
        }
    }
    return out;
}

Raster warp_serial(const Raster& src, const SampleGrid& grid, float fill) {
    if (src.size() == 0) throw std::invalid_argument("warp_serial: empty source");
    Raster out(src.channels, grid.height, grid.width, fill);
    for (int oy = 0; oy < grid.height; ++oy)
        for (int ox = 0; ox < grid.width; ++ox) {
            const std::size_t gi = static_cast<std::size_t>(oy) * grid.width + ox;
            if (!grid.valid[gi]) continue;
            const double sx =
                std::min(std::max(static_cast<double>(grid.x[gi]), 0.0),
                         static_cast<double>(src.width - 1));
            const double sy =
                std::min(std::max(static_cast<double>(grid.y[gi]), 0.0),
                         static_cast<double>(src.height - 1));
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const int y1 = std::min(y0 + 1, src.height - 1);
            const double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < src.channels; ++c)
                out.at(c, oy, ox) = static_cast<float>(
                    (1.0 - fy) * ((1.0 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1)) +
                    fy * ((1.0 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1)));
        }
    return out;
}

Raster warp_scatter_transpose(const Raster& out_grad, const SampleGrid& grid, int src_height,
                              int src_width) {
    if (out_grad.height != grid.height || out_grad.width != grid.width)
        throw std::invalid_argument("warp_scatter_transpose: grad/grid shape mismatch");
    std::vector<double> acc(static_cast<std::size_t>(out_grad.channels) * src_height * src_width,
                            0.0);
    const auto idx = [&](int c, int y, int x) {
        return (static_cast<std::size_t>(c) * src_height + y) * src_width + x;
    };
    for (int oy = 0; oy < grid.height; ++oy)
        for (int ox = 0; ox < grid.width; ++ox) {
            const std::size_t gi = static_cast<std::size_t>(oy) * grid.width + ox;
            if (!grid.valid[gi]) continue;
            const double sx =
                std::min(std::max(static_cast<double>(grid.x[gi]), 0.0),
                         static_cast<double>(src_width - 1));
            const double sy =
                std::min(std::max(static_cast<double>(grid.y[gi]), 0.0),
                         static_cast<double>(src_height - 1));
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, src_width - 1);
            const int y1 = std::min(y0 + 1, src_height - 1);
            const double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < out_grad.channels; ++c) {
                const double g = out_grad.at(c, oy, ox);
                acc[idx(c, y0, x0)] += g * (1.0 - fy) * (1.0 - fx);
                acc[idx(c, y0, x1)] += g * (1.0 - fy) * fx;
                acc[idx(c, y1, x0)] += g * fy * (1.0 - fx);
                acc[idx(c, y1, x1)] += g * fy * fx;
            }
        }
    Raster out(out_grad.channels, src_height, src_width);
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i]);
    return out;
}

Raster pano_yaw_column_shift(const Raster& pano, double yaw) {
    const double shift = yaw / kTwoPi * static_cast<double>(pano.width);
    Raster out(pano.channels, pano.height, pano.width);
    for (int y = 0; y < pano.height; ++y)
        for (int x = 0; x < pano.width; ++x) {
            double sx = std::fmod(static_cast<double>(x) + shift, static_cast<double>(pano.width));
            if (sx < 0) sx += static_cast<double>(pano.width);
            const int x0 = static_cast<int>(sx) % pano.width;
            const int x1 = (x0 + 1) % pano.width;  // circular
            const double fx = sx - std::floor(sx);
            for (int c = 0; c < pano.channels; ++c)
                out.at(c, y, x) = static_cast<float>((1.0 - fx) * pano.at(c, y, x0) +
                                                     fx * pano.at(c, y, x1));
        }
    return out;
}

}  // namespace crossview
