#include "crossview/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace crossview {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

void require_same_shape(const Raster& a, const Raster& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

Raster crop_sky(const Raster& r, double fraction) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw std::invalid_argument("crop_sky: fraction must be in [0, 1)");
    const int first = static_cast<int>(std::floor(fraction * r.height));
    if (first == 0) return r;
    Raster out(r.channels, r.height - first, r.width);
    for (int c = 0; c < r.channels; ++c)
        for (int y = first; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x) out.at(c, y - first, x) = r.at(c, y, x);
    return out;
}

double ssim(const Raster& a, const Raster& b) {
    require_same_shape(a, b, "ssim");
    if (a.height < kWin || a.width < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    double w[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - (kWin - 1) / 2.0;
            const double dx = j - (kWin - 1) / 2.0;
            w[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            wsum += w[i][j];
        }
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) w[i][j] /= wsum;

    const double c1 = 0.01 * 0.01;  // (K1*L)^2 with L=1
    const double c2 = 0.03 * 0.03;

    double total = 0.0;
    const int ny = a.height - kWin + 1;
    const int nx = a.width - kWin + 1;
    for (int c = 0; c < a.channels; ++c) {
        double channel_sum = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : channel_sum)
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double va = a.at(c, y + i, x + j);
                        const double vb = b.at(c, y + i, x + j);
                        const double wi = w[i][j];
                        ma += wi * va;
                        mb += wi * vb;
                        saa += wi * va * va;
                        sbb += wi * vb * vb;
                        sab += wi * va * vb;
                    }
                const double var_a = saa - ma * ma;
                const double var_b = sbb - mb * mb;
                const double cov = sab - ma * mb;
                channel_sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            }
        }
        total += channel_sum / (static_cast<double>(ny) * nx);
    }
    return total / a.channels;
}

RmsePsnr rmse_psnr(const Raster& a, const Raster& b) {
    require_same_shape(a, b, "rmse_psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = 255.0 * (static_cast<double>(a.data[i]) - b.data[i]);
        se += d * d;
    }
    RmsePsnr out;
    out.rmse = std::sqrt(se / static_cast<double>(a.data.size()));
    out.psnr = out.rmse == 0.0 ? std::numeric_limits<double>::infinity()
                               : 20.0 * std::log10(255.0 / out.rmse);
    return out;
}

double sharpness_diff(const Raster& a, const Raster& b) {
    require_same_shape(a, b, "sharpness_diff");
    if (a.height < 2 || a.width < 2)
        throw std::invalid_argument("sharpness_diff: image too small for forward differences");
    // g = |dx| + |dy| on the 255 scale; both differences exist on the
    // (H-1) x (W-1) region.
    double se = 0.0;
    const int ny = a.height - 1;
    const int nx = a.width - 1;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double ga =
                    std::abs(255.0 * (static_cast<double>(a.at(c, y, x + 1)) - a.at(c, y, x))) +
                    std::abs(255.0 * (static_cast<double>(a.at(c, y + 1, x)) - a.at(c, y, x)));
                const double gb =
                    std::abs(255.0 * (static_cast<double>(b.at(c, y, x + 1)) - b.at(c, y, x))) +
                    std::abs(255.0 * (static_cast<double>(b.at(c, y + 1, x)) - b.at(c, y, x)));
                const double d = ga - gb;
                se += d * d;
            }
    const double mse = se / (static_cast<double>(a.channels) * ny * nx);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

FeatureDistance feature_distance(const Raster& a, const Raster& b, const Embedder& emb) {
    const Embedding ea = emb.embed_image(a);
    const Embedding eb = emb.embed_image(b);
    FeatureDistance out;
    out.degenerate = ea.degenerate || eb.degenerate;
    double dot = 0.0;
    for (std::size_t i = 0; i < ea.v.size(); ++i) dot += ea.v[i] * eb.v[i];
    if (out.degenerate) dot = 0.0;
    out.value = 1.0 - dot;
    return out;
}

MetricReport evaluate_pair(const Raster& a, const Raster& b,
                           const std::vector<std::string>& metrics, double sky_fraction,
                           const Embedder* emb) {
    MetricReport report;
    const Raster ca = crop_sky(a, sky_fraction);
    const Raster cb = crop_sky(b, sky_fraction);
    report.sky_crop_rows = a.height - ca.height;
    for (const std::string& m : metrics) {
        if (m == "ssim") {
            report.values[m] = ssim(ca, cb);
        } else if (m == "rmse") {
            report.values[m] = rmse_psnr(ca, cb).rmse;
        } else if (m == "psnr") {
            const double v = rmse_psnr(ca, cb).psnr;
            report.values[m] = v;
            if (std::isinf(v)) report.notes[m] = "identical images: infinite PSNR";
        } else if (m == "sd") {
            const double v = sharpness_diff(ca, cb);
            report.values[m] = v;
            if (std::isinf(v)) report.notes[m] = "identical gradients: infinite SD";
        } else if (m == "feature_distance") {
            if (emb == nullptr) {
                report.values[m] = std::numeric_limits<double>::quiet_NaN();
                report.notes[m] = "no embedder configured";
            } else {
                const FeatureDistance fd = feature_distance(ca, cb, *emb);
                report.values[m] = fd.value;
                if (fd.degenerate) report.notes[m] = "degenerate (zero) embedding";
            }
        } else {
            throw std::invalid_argument("unknown metric '" + m + "'");
        }
    }
    return report;
}

std::string metric_report_json(const MetricReport& report) {
    nlohmann::json j;
    j["image_a"] = report.image_a;
    j["image_b"] = report.image_b;
    j["sky_crop_rows"] = report.sky_crop_rows;
    nlohmann::json vals = nlohmann::json::object();
    for (const auto& [name, v] : report.values) {
        if (std::isfinite(v))
            vals[name] = v;
        else
            vals[name] = nullptr;  // reason in notes
    }
    j["metrics"] = vals;
    j["notes"] = report.notes;
    return j.dump(2);
}

std::string metric_report_csv_header(const std::vector<std::string>& metrics) {
    std::ostringstream os;
    os << "image_a,image_b,sky_crop_rows";
    for (const auto& m : metrics) os << ',' << m;
    return os.str();
}

std::string metric_report_csv_row(const MetricReport& report,
                                  const std::vector<std::string>& metrics) {
    std::ostringstream os;
    os << report.image_a << ',' << report.image_b << ',' << report.sky_crop_rows;
    os.precision(10);
    for (const auto& m : metrics) {
        os << ',';
        auto it = report.values.find(m);
        if (it != report.values.end() && std::isfinite(it->second)) os << it->second;
    }
    return os.str();
}

}  // namespace crossview
