#include "crossview/gca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "crossview/geometry.hpp"
#include "crossview/rng.hpp"

namespace crossview {

std::vector<double> default_heights() {
    return {-3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0};
}

HeightHypothesisSet ZeroOffsetUniformPredictor::predict(
    const Raster& q, const std::vector<double>& heights) const {
    const int n = static_cast<int>(heights.size());
    HeightHypothesisSet out{heights, Raster(n, q.height, q.width),
                            Raster(n, q.height, q.width)};
    // offsets stay zero; logits stay zero (equal weights after softmax)
    return out;
}

HeightHypothesisSet SeededLinearPredictor::predict(
    const Raster& q, const std::vector<double>& heights) const {
    const int n = static_cast<int>(heights.size());
    Rng rng(seed_);
    std::vector<double> w_off(static_cast<std::size_t>(n) * q.channels);
    std::vector<double> w_log(static_cast<std::size_t>(n) * q.channels);
    for (auto& w : w_off) w = rng.normal() / std::sqrt(static_cast<double>(q.channels));
    for (auto& w : w_log) w = rng.normal() / std::sqrt(static_cast<double>(q.channels));

    HeightHypothesisSet out{heights, Raster(n, q.height, q.width),
                            Raster(n, q.height, q.width)};
    for (int i = 0; i < n; ++i) {
        for (int y = 0; y < q.height; ++y) {
            for (int x = 0; x < q.width; ++x) {
                double off = 0.0;
                double logit = 0.0;
                for (int c = 0; c < q.channels; ++c) {
                    const double qv = q.at(c, y, x);
                    off += w_off[static_cast<std::size_t>(i) * q.channels + c] * qv;
                    logit += w_log[static_cast<std::size_t>(i) * q.channels + c] * qv;
                }
                out.offsets.at(i, y, x) = static_cast<float>(off);
                out.logits.at(i, y, x) = static_cast<float>(logit);
            }
        }
    }
    return out;
}

HeightHypothesisSet OneHotPlanePredictor::predict(
    const Raster& q, const std::vector<double>& heights) const {
    const int n = static_cast<int>(heights.size());
    if (plane_ < 0 || plane_ >= n)
        throw std::invalid_argument("one-hot predictor: plane index out of range");
    HeightHypothesisSet out{heights, Raster(n, q.height, q.width),
                            Raster(n, q.height, q.width)};
    const float kBig = 1e9f;
    for (int i = 0; i < n; ++i) {
        const float v = (i == plane_) ? kBig : -kBig;
        float* p = out.logits.data.data() + static_cast<std::size_t>(i) * out.logits.plane_size();
        std::fill(p, p + out.logits.plane_size(), v);
    }
    return out;
}

namespace {

// Bilinear sample of all channels of v at continuous (x, y); border clamp.
inline void sample_bilinear(const Raster& v, double x, double y, double* out) {
    const double cx = std::clamp(x, 0.0, static_cast<double>(v.width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(v.height - 1));
    const int x0 = static_cast<int>(cx);
    const int y0 = static_cast<int>(cy);
    const int x1 = std::min(x0 + 1, v.width - 1);
    const int y1 = std::min(y0 + 1, v.height - 1);
    const double fx = cx - x0;
    const double fy = cy - y0;
    for (int c = 0; c < v.channels; ++c) {
        const double v00 = v.at(c, y0, x0);
        const double v01 = v.at(c, y0, x1);
        const double v10 = v.at(c, y1, x0);
        const double v11 = v.at(c, y1, x1);
        out[c] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                 fy * ((1.0 - fx) * v10 + fx * v11);
    }
}

struct RowScratch {
    std::vector<double> logits;   // per-plane masked logit
    std::vector<double> samples;  // per-plane sampled features (n * channels)
    std::vector<double> mixed;    // per-channel accumulator
};

GcaResult run_gca(const Raster& q, const Raster& v, const CameraModel& cam,
                  const RelativePose& pose, const SatMeta& meta,
                  const HeightHypothesisSet& hyp, const GcaParams& params,
                  bool parallel) {
    const int n = static_cast<int>(hyp.heights.size());
    if (n <= 0) throw std::invalid_argument("gca: empty height hypothesis set");
    if (hyp.offsets.channels != n || hyp.logits.channels != n)
        throw std::invalid_argument("gca: hypothesis planes do not match heights");
    if (hyp.offsets.height != q.height || hyp.offsets.width != q.width ||
        hyp.logits.height != q.height || hyp.logits.width != q.width)
        throw std::invalid_argument("gca: hypothesis maps do not match query shape");
    if (camera_width(cam) != q.width || camera_height(cam) != q.height)
        throw std::invalid_argument("gca: camera dimensions do not match query shape");
    if (params.stride <= 0) throw std::invalid_argument("gca: stride must be positive");
    if (params.height_reference != "camera" && params.height_reference != "ground")
        throw std::invalid_argument("gca: height_reference must be 'camera' or 'ground'");
    const bool ground_ref = params.height_reference == "ground";

    GcaResult result{Raster(v.channels, q.height, q.width), 0.0, false, {}};
    const double neg_inf = -std::numeric_limits<double>::infinity();

    std::vector<std::uint64_t> row_invalid(q.height, 0);
    std::vector<std::uint64_t> row_sampling(q.height, 0);
    std::vector<std::uint64_t> row_offsets(q.height, 0);
    std::vector<std::uint64_t> row_attention(q.height, 0);

#pragma omp parallel for schedule(static) if (parallel)
    for (int y = 0; y < q.height; ++y) {
        RowScratch scratch;
        scratch.logits.resize(n);
        scratch.samples.resize(static_cast<std::size_t>(n) * v.channels);
        scratch.mixed.resize(v.channels);
        for (int x = 0; x < q.width; ++x) {
            double max_logit = neg_inf;
            for (int i = 0; i < n; ++i) {
                // clamp + add of the per-pixel height offset: 2 ops per plane
                double off = hyp.offsets.at(i, y, x);
                off = std::clamp(off, -params.offset_clamp, params.offset_clamp);
                double h = hyp.heights[static_cast<std::size_t>(i)] + off;
                row_offsets[y] += 2;
                if (ground_ref) h -= pose.cam_height;
                // projection + sample: 1 op per plane (masked planes still pay
                // for the projection, matching the 4*N*H*W complexity model)
                row_sampling[y] += 1;
                const auto uv = project_ground_to_sat(cam, pose, meta, x, y, h);
                if (!uv) {
                    scratch.logits[i] = neg_inf;
                    continue;
                }
                sample_bilinear(v, uv->x / params.stride, uv->y / params.stride,
                                scratch.samples.data() + static_cast<std::size_t>(i) * v.channels);
                scratch.logits[i] = hyp.logits.at(i, y, x);
                max_logit = std::max(max_logit, scratch.logits[i]);
            }
            double denom = 0.0;
            std::fill(scratch.mixed.begin(), scratch.mixed.end(), 0.0);
            for (int i = 0; i < n; ++i) {
                // attention scan/accumulate: 1 op per plane
                row_attention[y] += 1;
                if (scratch.logits[i] == neg_inf) continue;
                const double w = std::exp(scratch.logits[i] - max_logit);
                denom += w;
                const double* s = scratch.samples.data() + static_cast<std::size_t>(i) * v.channels;
                for (int c = 0; c < v.channels; ++c) scratch.mixed[c] += w * s[c];
            }
            if (denom == 0.0) {
                row_invalid[y] += 1;
                continue;  // all planes masked: output stays zero
            }
            for (int c = 0; c < v.channels; ++c)
                result.features.at(c, y, x) = static_cast<float>(scratch.mixed[c] / denom);
        }
    }

    std::uint64_t invalid = 0;
    for (int y = 0; y < q.height; ++y) {
        invalid += row_invalid[y];
        result.ops.sampling += row_sampling[y];
        result.ops.offsets += row_offsets[y];
        result.ops.attention += row_attention[y];
    }
    result.invalid_fraction =
        static_cast<double>(invalid) / (static_cast<double>(q.height) * q.width);
    result.low_coverage_warning = result.invalid_fraction > 0.5;
    return result;
}

}  // namespace

GcaResult gca_aggregate(const Raster& q, const Raster& v, const CameraModel& cam,
                        const RelativePose& pose, const SatMeta& meta,
                        const HeightHypothesisSet& hyp, const GcaParams& params) {
    return run_gca(q, v, cam, pose, meta, hyp, params, true);
}

GcaResult gca_aggregate_serial(const Raster& q, const Raster& v, const CameraModel& cam,
                               const RelativePose& pose, const SatMeta& meta,
                               const HeightHypothesisSet& hyp, const GcaParams& params) {
    return run_gca(q, v, cam, pose, meta, hyp, params, false);
}

std::uint64_t gca_flop_estimate(int n, int height, int width) {
    if (n <= 0 || height <= 0 || width <= 0)
        throw std::invalid_argument("gca_flop_estimate: dimensions must be positive");
    const std::uint64_t nu = static_cast<std::uint64_t>(n);
    const std::uint64_t hw =
        static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max();
    if (hw != 0 && nu > limit / hw / 4)
        throw std::overflow_error("gca_flop_estimate: overflow");
    return 4 * nu * hw;
}

}  // namespace crossview
