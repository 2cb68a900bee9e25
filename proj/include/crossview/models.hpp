#pragma once

#include <memory>
#include <optional>
#include <string>

#include "crossview/camera.hpp"
#include "crossview/diffusion.hpp"
#include "crossview/raster.hpp"

namespace crossview {

struct PredictorContext {
    const Raster* sat_feat = nullptr;
    const RelativePose* pose = nullptr;
};

// Noise-prediction interface of the reverse process. The desk-scale stand-ins
// below are closed-form; a trained network would slot in behind the same
// interface.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual Raster predict(const Raster& z_t, int t, const PredictorContext& ctx) const = 0;

    // d(predict_z0)/d(z_t) as a scalar, available when the predictor is
    // elementwise affine in z_t. Guidance chains use it; absent means the
    // noise output is treated as constant in z_t (scale 1/sqrt(ab_t)).
    virtual std::optional<double> z0_jacobian_scale(int t) const {
        (void)t;
        return std::nullopt;
    }
};

// Exact posterior denoiser for data distributed N(mean, var*I): with
// z_t = sqrt(ab) z0 + sqrt(1-ab) eps, the marginal is
// N(sqrt(ab) mean, (ab var + 1 - ab) I) and the conditional expectation of
// the noise is
//   eps_hat = sqrt(1 - ab) * (z_t - sqrt(ab) mean) / (ab var + 1 - ab),
// normalized so predict_z0 returns the posterior mean of z0 given z_t.
class GaussianScoreDenoiser : public NoisePredictor {
public:
    GaussianScoreDenoiser(Raster mean, double var, NoiseSchedule sched);
    Raster predict(const Raster& z_t, int t, const PredictorContext& ctx) const override;
    std::optional<double> z0_jacobian_scale(int t) const override;

private:
    Raster mean_;
    double var_;
    NoiseSchedule sched_;
};

// Oracle denoiser whose clean prediction is always `target`:
//   eps_hat = (z_t - sqrt(ab) target) / sqrt(1 - ab),
// so predict_z0(z_t, eps_hat) == target for any z_t. Drives the pose
// machinery with a known answer.
class WarpOracleDenoiser : public NoisePredictor {
public:
    WarpOracleDenoiser(Raster target, NoiseSchedule sched);
    Raster predict(const Raster& z_t, int t, const PredictorContext& ctx) const override;
    std::optional<double> z0_jacobian_scale(int t) const override { return 0.0; }
    const Raster& target() const { return target_; }

private:
    Raster target_;
    NoiseSchedule sched_;
};

// Replays externally supplied noise predictions: step t reads
// <dir>/eps_NNN.cvt (NNN = zero-padded t). Missing or mis-shaped files are
// errors.
class ExternalPredictor : public NoisePredictor {
public:
    explicit ExternalPredictor(std::string dir);
    Raster predict(const Raster& z_t, int t, const PredictorContext& ctx) const override;
    static std::string step_filename(int t);

private:
    std::string dir_;
};

// Latent <-> image codec. Desk scale runs with the identity; the strided
// codec exercises resolution-changing paths.
class Codec {
public:
    virtual ~Codec() = default;
    virtual Raster encode(const Raster& image) const = 0;
    virtual Raster decode(const Raster& latent) const = 0;
    // Vector-Jacobian product of decode, for gradient chains:
    // given d(loss)/d(decode(z)), returns d(loss)/d(z).
    virtual Raster decode_vjp(const Raster& upstream, int latent_height,
                              int latent_width) const = 0;
};

class IdentityCodec : public Codec {
public:
    Raster encode(const Raster& image) const override { return image; }
    Raster decode(const Raster& latent) const override { return latent; }
    Raster decode_vjp(const Raster& upstream, int, int) const override { return upstream; }
};

// encode: stride x stride mean pool (dims must divide); decode: nearest
// upsample by the same stride.
class AvgPoolCodec : public Codec {
public:
    explicit AvgPoolCodec(int stride);
    Raster encode(const Raster& image) const override;
    Raster decode(const Raster& latent) const override;
    Raster decode_vjp(const Raster& upstream, int latent_height, int latent_width) const override;
    int stride() const { return stride_; }

private:
    int stride_;
};

}  // namespace crossview
