#pragma once

#include <map>
#include <string>
#include <vector>

#include "crossview/embedder.hpp"
#include "crossview/raster.hpp"

namespace crossview {

// Metric values may be +inf (identical inputs under PSNR/SD); JSON
// serialization turns those into null plus a reason note.
struct MetricReport {
    std::map<std::string, double> values;
    std::map<std::string, std::string> notes;
    int sky_crop_rows = 0;
    std::string image_a;
    std::string image_b;
};

std::string metric_report_json(const MetricReport& report);
std::string metric_report_csv_header(const std::vector<std::string>& metrics);
std::string metric_report_csv_row(const MetricReport& report,
                                  const std::vector<std::string>& metrics);

// Removes the top fraction of rows (satellites never see sky). Keeps rows
// [floor(fraction*H), H).
Raster crop_sky(const Raster& r, double fraction);

// Mean SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=1,
// windows fully inside the image, channel-averaged.
double ssim(const Raster& a, const Raster& b);

struct RmsePsnr {
    double rmse = 0.0;  // on the 0-255 scale
    double psnr = 0.0;  // dB; +inf for identical inputs
};
RmsePsnr rmse_psnr(const Raster& a, const Raster& b);

// Gradient-magnitude PSNR: g(x) = |dx| + |dy| by forward differences on the
// 255 scale, compared over the (H-1)x(W-1) region where both differences
// exist. +inf when the gradients are identical.
double sharpness_diff(const Raster& a, const Raster& b);

struct FeatureDistance {
    double value = 0.0;  // 1 - cosine(emb(a), emb(b)), in [0, 2]
    bool degenerate = false;
};
FeatureDistance feature_distance(const Raster& a, const Raster& b, const Embedder& emb);

// Runs the requested metrics on a pair after sky cropping. `emb` may be null
// when feature_distance is not requested (otherwise it is reported as null
// with a note).
MetricReport evaluate_pair(const Raster& a, const Raster& b,
                           const std::vector<std::string>& metrics, double sky_fraction,
                           const Embedder* emb);

}  // namespace crossview
