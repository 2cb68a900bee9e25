#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "crossview/camera.hpp"
#include "crossview/raster.hpp"

namespace crossview {

// 3x3 projective map over pixel coordinates, stored row major in double.
// The bottom-right entry is kept at 1 (normalized form).
struct Homography {
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    static Homography identity() { return Homography{}; }
    static Homography translation(double tx, double ty);

    // Divides through by m[2][2]; throws if |m[2][2]| is ~0.
    Homography normalized() const;
    Homography inverse() const;

    // Maps (x, y); nullopt when the homogeneous w-coordinate is <= 1e-8.
    std::optional<Vec2> apply(double x, double y) const;

    // Ratio of largest to smallest singular value.
    double condition_number() const;

    // The 8 free parameters in row-major order (m22 excluded).
    std::array<double, 8> params() const;
    static Homography from_params(const std::array<double, 8>& p);
};

// Matrix product a*b (apply b first, then a).
Homography homography_apply(const Homography& a, const Homography& b);

// Per-output-pixel source coordinates plus a validity mask. Invalid cells
// are filled with a constant by warp() instead of being sampled.
struct SampleGrid {
    int height = 0;
    int width = 0;
    std::vector<float> x;            // source x per output pixel
    std::vector<float> y;            // source y per output pixel
    std::vector<std::uint8_t> valid; // 1 = sample, 0 = fill

    SampleGrid() = default;
    SampleGrid(int h, int w);
    std::size_t size() const { return static_cast<std::size_t>(height) * width; }
    double valid_fraction() const;
};

// Projects ground-view pixel (u_g, v_g), assumed to lie on the horizontal
// plane at height h meters relative to the camera (negative = below), onto
// satellite pixel coordinates. Returns nullopt when the ray cannot reach
// that plane (sign mismatch or near-horizontal ray) or the hit falls
// outside the satellite raster.
std::optional<Vec2> project_ground_to_sat(const CameraModel& cam, const RelativePose& pose,
                                          const SatMeta& meta, double u_g, double v_g, double h);

// Inverse of project_ground_to_sat restricted to the ground plane
// (h = -cam_height): maps a satellite coordinate to the ground-view pixel
// that sees it. nullopt when out of the camera's field of view or at the
// camera's own footprint (zero range).
std::optional<Vec2> sat_to_ground_pixel(const CameraModel& cam, const RelativePose& pose,
                                        const SatMeta& meta, double u_s, double v_s);

// Full ground-view grid onto the satellite raster: one cell per camera
// pixel, mapping to where a plane at height h (camera-relative, negative =
// below) would be sampled. Warping the satellite image by this grid renders
// the plane as seen from the pose; h = -cam_height gives the ground plane.
SampleGrid ground_view_grid(const CameraModel& cam, const RelativePose& pose, const SatMeta& meta,
                            double h);

// crop x crop satellite-axis-aligned window centered on the pose position;
// each cell maps to the ground-view pixel that sees that spot of the ground
// plane. Warping a ground raster by this grid yields its overhead
// projection. Cells outside the camera's view (including the zero-range
// center singularity) are invalid.
SampleGrid overhead_grid(const CameraModel& cam, const RelativePose& pose, const SatMeta& meta,
                         int crop);

// crop x crop window into the satellite raster centered on the pose
// position and rotated by -yaw, so that content ahead of the camera appears
// at the top of the window ("cropping and rotating the corresponding
// regions"). With yaw = 0 this is the axis-aligned crop.
SampleGrid satellite_crop_grid(const RelativePose& pose, const SatMeta& meta, int crop);

// Grid realizing homography h over an output of the given size; source
// bounds are the same size. Invalid where the homogeneous w <= 1e-8 or the
// source falls outside [0, W) x [0, H).
SampleGrid homography_grid(const Homography& h, int height, int width);

// Composes a sampling grid with a homography applied to its source
// coordinates: warp(src, compose_grid(g, h)) samples src where
// warp(warp(src, grid(h)), g) would, but with a single interpolation stage.
// src_height/src_width bound the validity test.
SampleGrid compose_grid(const SampleGrid& g, const Homography& h, int src_height, int src_width);

// Bilinear warp with border clamping; invalid cells take `fill`. The output
// has src.channels and the grid's spatial size. OpenMP-parallel over rows.
Raster warp(const Raster& src, const SampleGrid& grid, float fill = 0.0f);

// Plain serial reference implementation of the same contract, kept for
// testing and benchmarking against the parallel kernel.
Raster warp_serial(const Raster& src, const SampleGrid& grid, float fill = 0.0f);

// Scatter-transpose of warp: accumulates each output-cell gradient into the
// four source texels it interpolated, with the same weights and border
// clamping. Used by the analytic alignment gradients.
Raster warp_scatter_transpose(const Raster& out_grad, const SampleGrid& grid, int src_height,
                              int src_width);

// Circular horizontal shift of a panorama raster by `yaw` radians worth of
// columns (yaw / 2pi * width, bilinear, wrap-around). Shifting by the pose
// yaw is the column-shift route to yaw handling; the projection route folds
// yaw into the world azimuth instead. The two are tested for agreement.
Raster pano_yaw_column_shift(const Raster& pano, double yaw);

}  // namespace crossview
