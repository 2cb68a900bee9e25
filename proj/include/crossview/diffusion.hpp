#pragma once

#include <string>
#include <vector>

#include "crossview/raster.hpp"
#include "crossview/rng.hpp"

namespace crossview {

// Variance schedule for T timesteps, indexed t in [1, T]. alpha_bar(0) is
// defined as 1, which makes the t = 1 reverse step deterministic (sigma = 0)
// and lets the closed forms below hold at the boundary.
struct NoiseSchedule {
    int steps = 0;
    double eta = 0.0;  // 0 = deterministic reverse process, 1 = ancestral-like
    std::vector<double> beta;       // beta[t-1], size T
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product of alpha

    double alpha_bar_at(int t) const;  // t in [0, T]; alpha_bar_at(0) == 1
    // Reverse-step noise scale sigma_t = eta * sqrt((1-ab_{t-1})/(1-ab_t))
    //                                        * sqrt(1 - ab_t/ab_{t-1}).
    double sigma(int t) const;
};

struct GuidanceWeights {
    double lambda_pose = 0.0;
    double gamma_text = 0.0;
};

// kind: "linear" interpolates beta from beta_start to beta_end inclusive;
// "cosine" derives beta from the squared-cosine alpha_bar curve (s = 0.008),
// ignoring beta_start/beta_end. Invariants: every beta in (0, 1), alpha_bar
// strictly decreasing.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end,
                            const std::string& kind, double eta);

// z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps
Raster forward_diffuse(const Raster& z0, const Raster& eps, int t, const NoiseSchedule& s);

// z0 = (z_t - sqrt(1 - ab_t) eps) / sqrt(ab_t); exact inverse of the above.
Raster predict_z0(const Raster& z_t, const Raster& eps, int t, const NoiseSchedule& s);

struct DdimStep {
    Raster z_prev;
    Raster z_t0;  // the clean prediction used for the step
};

// One reverse step t -> t-1:
//   z_prev = sqrt(ab_{t-1}) z_t0 + sqrt(1 - ab_{t-1} - sigma_t^2) eps
//            + sigma_t * noise
// Noise is drawn from rng only when sigma_t > 0, so eta = 0 runs are
// deterministic and do not consume random state.
DdimStep ddim_step(const Raster& z_t, const Raster& eps_pred, int t, const NoiseSchedule& s,
                   Rng& rng);

// Reverse step with additive score guidance:
//   z_prev = mu + (lambda * pose_grad + gamma * text_grad) + sigma_t * noise
// where mu is the deterministic part of ddim_step. pose_grad/text_grad are
// gradients of log-probability surrogates (negative loss gradients), added
// as one fused term so that guided minus unguided equals the term exactly.
// Null gradients are treated as zero.
DdimStep guided_step(const Raster& z_t, const Raster& eps_pred, const Raster* pose_grad,
                     const Raster* text_grad, const GuidanceWeights& w, int t,
                     const NoiseSchedule& s, Rng& rng);

}  // namespace crossview
