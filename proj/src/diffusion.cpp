#include "crossview/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace crossview {
namespace {

void check_t(int t, const NoiseSchedule& s, const char* who) {
    if (t < 1 || t > s.steps)
        throw std::invalid_argument(std::string(who) + ": t out of range [1, T]");
}

void check_shapes(const Raster& a, const Raster& b, const char* who) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t < 0 || t > steps)
        throw std::invalid_argument("NoiseSchedule: t out of range [0, T]");
    return t == 0 ? 1.0 : alpha_bar[t - 1];
}

double NoiseSchedule::sigma(int t) const {
    if (t < 1 || t > steps) throw std::invalid_argument("NoiseSchedule::sigma: t out of range");
    const double ab_t = alpha_bar_at(t);
    const double ab_prev = alpha_bar_at(t - 1);
    // t = 1 has ab_prev = 1, so sigma is 0 and the final step is exact.
    return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) *
           std::sqrt(1.0 - ab_t / ab_prev);
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end,
                            const std::string& kind, double eta) {
    if (steps < 1) throw std::invalid_argument("make_schedule: steps must be >= 1");
    if (eta < 0.0) throw std::invalid_argument("make_schedule: eta must be >= 0");
    NoiseSchedule s;
    s.steps = steps;
    s.eta = eta;
    s.beta.resize(steps);
    if (kind == "linear") {
        if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
            throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
        for (int t = 0; t < steps; ++t)
            s.beta[t] = steps == 1 ? beta_start
                                   : beta_start + (beta_end - beta_start) *
                                                      static_cast<double>(t) /
                                                      static_cast<double>(steps - 1);
    } else if (kind == "cosine") {
        // Squared-cosine alpha_bar with offset 0.008; beta derived from the
        // ratio of consecutive alpha_bar values and clipped below 0.999.
        const double off = 0.008;
        auto f = [&](double t01) {
            const double v = std::cos((t01 + off) / (1.0 + off) * std::numbers::pi / 2.0);
            return v * v;
        };
        const double f0 = f(0.0);
        double prev = 1.0;
        for (int t = 1; t <= steps; ++t) {
            const double ab = f(static_cast<double>(t) / steps) / f0;
            double b = 1.0 - ab / prev;
            b = std::min(b, 0.999);
            if (b <= 0.0) b = 1e-8;
            s.beta[t - 1] = b;
            prev *= 1.0 - b;
        }
    } else {
        throw std::invalid_argument("make_schedule: unknown kind '" + kind +
                                    "' (expected \"linear\" or \"cosine\")");
    }
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        if (!(s.beta[t] > 0.0 && s.beta[t] < 1.0))
            throw std::invalid_argument("make_schedule: beta outside (0, 1)");
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

Raster forward_diffuse(const Raster& z0, const Raster& eps, int t, const NoiseSchedule& s) {
    check_t(t, s, "forward_diffuse");
    check_shapes(z0, eps, "forward_diffuse");
    const double ab = s.alpha_bar_at(t);
    return affine_combine(std::sqrt(ab), z0, std::sqrt(1.0 - ab), eps);
}

Raster predict_z0(const Raster& z_t, const Raster& eps, int t, const NoiseSchedule& s) {
    check_t(t, s, "predict_z0");
    check_shapes(z_t, eps, "predict_z0");
    const double ab = s.alpha_bar_at(t);
    const double inv = 1.0 / std::sqrt(ab);
    return affine_combine(inv, z_t, -std::sqrt(1.0 - ab) * inv, eps);
}

DdimStep ddim_step(const Raster& z_t, const Raster& eps_pred, int t, const NoiseSchedule& s,
                   Rng& rng) {
    return guided_step(z_t, eps_pred, nullptr, nullptr, GuidanceWeights{}, t, s, rng);
}

DdimStep guided_step(const Raster& z_t, const Raster& eps_pred, const Raster* pose_grad,
                     const Raster* text_grad, const GuidanceWeights& w, int t,
                     const NoiseSchedule& s, Rng& rng) {
    check_t(t, s, "guided_step");
    check_shapes(z_t, eps_pred, "guided_step");
    if (pose_grad) check_shapes(z_t, *pose_grad, "guided_step(pose_grad)");
    if (text_grad) check_shapes(z_t, *text_grad, "guided_step(text_grad)");

    const double ab_prev = s.alpha_bar_at(t - 1);
    const double sig = s.sigma(t);
    const double dir_coef_sq = 1.0 - ab_prev - sig * sig;
    if (dir_coef_sq < -1e-12)
        throw std::invalid_argument("guided_step: sigma exceeds the direction budget");
    const double dir_coef = std::sqrt(std::max(0.0, dir_coef_sq));

    DdimStep out;
    out.z_t0 = predict_z0(z_t, eps_pred, t, s);
    // mu, the deterministic DDIM mean.
    out.z_prev = affine_combine(std::sqrt(ab_prev), out.z_t0, dir_coef, eps_pred);

    // Guidance enters as a single fused term so the additivity property
    // (guided minus unguided equals lambda*g_pose + gamma*g_text) holds at
    // the level of this function's own arithmetic.
    if ((pose_grad && w.lambda_pose != 0.0) || (text_grad && w.gamma_text != 0.0)) {
        const std::size_t n = out.z_prev.data.size();
        for (std::size_t i = 0; i < n; ++i) {
            double g = 0.0;
            if (pose_grad && w.lambda_pose != 0.0)
                g += w.lambda_pose * static_cast<double>(pose_grad->data[i]);
            if (text_grad && w.gamma_text != 0.0)
                g += w.gamma_text * static_cast<double>(text_grad->data[i]);
            out.z_prev.data[i] =
                static_cast<float>(static_cast<double>(out.z_prev.data[i]) + g);
        }
    }

    if (sig > 0.0) {
        // Noise drawn only when needed: eta = 0 stays deterministic and
        // leaves the rng stream untouched.
        for (float& v : out.z_prev.data)
            v = static_cast<float>(static_cast<double>(v) + sig * rng.normal());
    }
    return out;
}

}  // namespace crossview
