#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "crossview/camera.hpp"
#include "crossview/raster.hpp"

namespace crossview {

// N height hypotheses per ground pixel: shared base heights plus per-pixel
// offsets and attention logits (both N x H x W).
struct HeightHypothesisSet {
    std::vector<double> heights;
    Raster offsets;
    Raster logits;
};

// The eight default hypothesis heights in meters.
std::vector<double> default_heights();

// Produces offsets/logits from the ground feature map Q. Desk-scale
// stand-ins for a learned head.
class HypothesisPredictor {
public:
    virtual ~HypothesisPredictor() = default;
    virtual HeightHypothesisSet predict(const Raster& q,
                                        const std::vector<double>& heights) const = 0;
};

// Zero offsets, all-equal logits: aggregation reduces to a uniform mixture
// over the height planes.
class ZeroOffsetUniformPredictor : public HypothesisPredictor {
public:
    HeightHypothesisSet predict(const Raster& q,
                                const std::vector<double>& heights) const override;
};

// Fixed random linear map of Q's channels to offsets and logits.
class SeededLinearPredictor : public HypothesisPredictor {
public:
    explicit SeededLinearPredictor(std::uint64_t seed) : seed_(seed) {}
    HeightHypothesisSet predict(const Raster& q,
                                const std::vector<double>& heights) const override;

private:
    std::uint64_t seed_;
};

// One-hot oracle: full attention on a single plane (used by tests to check
// geometric fidelity of the aggregation).
class OneHotPlanePredictor : public HypothesisPredictor {
public:
    explicit OneHotPlanePredictor(int plane) : plane_(plane) {}
    HeightHypothesisSet predict(const Raster& q,
                                const std::vector<double>& heights) const override;

private:
    int plane_;
};

struct GcaParams {
    double offset_clamp = 1.0;  // |offset| is clamped to this many meters
    int stride = 1;             // satellite-to-V feature stride
    // "camera": hypothesis heights are relative to the camera (ground plane
    // at -cam_height); "ground": heights above the ground plane.
    std::string height_reference = "camera";
};

struct GcaOpCount {
    std::uint64_t sampling = 0;
    std::uint64_t offsets = 0;
    std::uint64_t attention = 0;
    std::uint64_t total() const { return sampling + offsets + attention; }
};

struct GcaResult {
    Raster features;          // V.channels x Q.height x Q.width
    double invalid_fraction;  // pixels with no valid plane
    bool low_coverage_warning;  // more than half the pixels had no valid plane
    GcaOpCount ops;
};

// Geometry-constrained aggregation: for each ground pixel of Q, samples the
// satellite feature map V at the projections of the N hypothesis heights
// (base + clamped offset) and mixes the samples with attention weights
// softmaxed over the valid planes. Invalid projections contribute -inf
// logits; pixels with no valid plane output zeros. OpenMP-parallel.
GcaResult gca_aggregate(const Raster& q, const Raster& v, const CameraModel& cam,
                        const RelativePose& pose, const SatMeta& meta,
                        const HeightHypothesisSet& hyp, const GcaParams& params = {});
GcaResult gca_aggregate_serial(const Raster& q, const Raster& v, const CameraModel& cam,
                               const RelativePose& pose, const SatMeta& meta,
                               const HeightHypothesisSet& hyp, const GcaParams& params = {});

// Closed-form operation estimate: 4*N*H*W (N samplings, 2N coordinate
// offsets, N attention accumulations per pixel). Throws on overflow.
std::uint64_t gca_flop_estimate(int n, int height, int width);

}  // namespace crossview
