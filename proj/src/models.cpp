#include "crossview/models.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "crossview/io.hpp"

namespace crossview {

GaussianScoreDenoiser::GaussianScoreDenoiser(Raster mean, double var, NoiseSchedule sched)
    : mean_(std::move(mean)), var_(var), sched_(std::move(sched)) {
    if (var_ < 0.0) throw std::invalid_argument("GaussianScoreDenoiser: var must be >= 0");
}

Raster GaussianScoreDenoiser::predict(const Raster& z_t, int t, const PredictorContext&) const {
    if (!z_t.same_shape(mean_))
        throw std::invalid_argument("GaussianScoreDenoiser: z_t does not match mean shape");
    const double ab = sched_.alpha_bar_at(t);
    const double marg = ab * var_ + (1.0 - ab);  // marginal variance of z_t
    if (marg <= 0.0) throw std::runtime_error("GaussianScoreDenoiser: degenerate marginal");
    const double k = std::sqrt(1.0 - ab) / marg;
    return affine_combine(k, z_t, -k * std::sqrt(ab), mean_);
}

std::optional<double> GaussianScoreDenoiser::z0_jacobian_scale(int t) const {
    const double ab = sched_.alpha_bar_at(t);
    const double marg = ab * var_ + (1.0 - ab);
    // z0_hat = (z_t - sqrt(1-ab) eps_hat) / sqrt(ab) with eps_hat affine in
    // z_t at slope sqrt(1-ab)/marg.
    return (1.0 - (1.0 - ab) / marg) / std::sqrt(ab);
}

WarpOracleDenoiser::WarpOracleDenoiser(Raster target, NoiseSchedule sched)
    : target_(std::move(target)), sched_(std::move(sched)) {}

Raster WarpOracleDenoiser::predict(const Raster& z_t, int t, const PredictorContext&) const {
    if (!z_t.same_shape(target_))
        throw std::invalid_argument("WarpOracleDenoiser: z_t does not match target shape");
    const double ab = sched_.alpha_bar_at(t);
    if (1.0 - ab <= 0.0)
        throw std::runtime_error("WarpOracleDenoiser: alpha_bar is 1 at t, eps is undefined");
    const double inv = 1.0 / std::sqrt(1.0 - ab);
    return affine_combine(inv, z_t, -std::sqrt(ab) * inv, target_);
}

ExternalPredictor::ExternalPredictor(std::string dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw std::invalid_argument("ExternalPredictor: empty directory");
}

std::string ExternalPredictor::step_filename(int t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "eps_%03d.cvt", t);
    return buf;
}

Raster ExternalPredictor::predict(const Raster& z_t, int t, const PredictorContext&) const {
    const std::string path = dir_ + "/" + step_filename(t);
    Raster eps = cvt_read(path);
    if (!eps.same_shape(z_t))
        throw std::runtime_error("ExternalPredictor: '" + path + "' does not match latent shape");
    return eps;
}

AvgPoolCodec::AvgPoolCodec(int stride) : stride_(stride) {
    if (stride < 1) throw std::invalid_argument("AvgPoolCodec: stride must be >= 1");
}

Raster AvgPoolCodec::encode(const Raster& image) const {
    if (image.height % stride_ != 0 || image.width % stride_ != 0)
        throw std::invalid_argument("AvgPoolCodec: dimensions must divide by stride");
    Raster out(image.channels, image.height / stride_, image.width / stride_);
    const double inv = 1.0 / (static_cast<double>(stride_) * stride_);
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < stride_; ++dy)
                    for (int dx = 0; dx < stride_; ++dx)
                        s += image.at(c, y * stride_ + dy, x * stride_ + dx);
                out.at(c, y, x) = static_cast<float>(s * inv);
            }
    return out;
}

Raster AvgPoolCodec::decode(const Raster& latent) const {
    Raster out(latent.channels, latent.height * stride_, latent.width * stride_);
    for (int c = 0; c < latent.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(c, y, x) = latent.at(c, y / stride_, x / stride_);
    return out;
}

Raster AvgPoolCodec::decode_vjp(const Raster& upstream, int latent_height,
                                int latent_width) const {
    if (upstream.height != latent_height * stride_ || upstream.width != latent_width * stride_)
        throw std::invalid_argument("AvgPoolCodec: upstream does not match decoded shape");
    Raster out(upstream.channels, latent_height, latent_width);
    for (int c = 0; c < upstream.channels; ++c)
        for (int y = 0; y < upstream.height; ++y)
            for (int x = 0; x < upstream.width; ++x) {
                const std::size_t i =
                    (static_cast<std::size_t>(c) * latent_height + y / stride_) * latent_width +
                    x / stride_;
                out.data[i] = static_cast<float>(static_cast<double>(out.data[i]) +
                                                 static_cast<double>(upstream.at(c, y, x)));
            }
    return out;
}

}  // namespace crossview
