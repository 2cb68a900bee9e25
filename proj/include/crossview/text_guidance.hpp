#pragma once

#include <string>
#include <vector>

#include "crossview/diffusion.hpp"
#include "crossview/embedder.hpp"
#include "crossview/models.hpp"
#include "crossview/raster.hpp"
#include "crossview/rng.hpp"

namespace crossview {

struct PatchRect {
    int x = 0;
    int y = 0;
    int size = 0;
};

// n square patch windows at uniformly random valid offsets; deterministic
// per rng state. Throws if the patch does not fit.
std::vector<PatchRect> partition_offsets(int height, int width, int n_patches,
                                         int patch_size, Rng& rng);
std::vector<Raster> partition_patches(const Raster& r, int n_patches, int patch_size,
                                      Rng& rng);
Raster extract_patch(const Raster& r, const PatchRect& p);

struct TextLoss {
    double value = 0.0;       // 1 - mean cosine similarity, in [0, 2]
    bool degenerate = false;  // some patch had a zero embedding (counted as sim 0)
};

// Loss over an explicit patch set (used so gradient checks can re-evaluate
// the loss at identical patch windows).
TextLoss text_loss_at(const Raster& decoded, const std::vector<double>& target,
                      const Embedder& emb, const std::vector<PatchRect>& patches);
TextLoss text_loss(const Raster& decoded, const std::vector<double>& target,
                   const Embedder& emb, int n_patches, int patch_size, Rng& rng);

struct TextGuidanceConfig {
    int n_patches = 4;
    int patch_size = 0;  // 0 -> min(H, W) of the decoded raster
};

// Gradient of the patch-embedding similarity loss with respect to z_t,
// chained through the clean-latent prediction and the codec, returned with a
// leading minus sign so the sampler can add it as +gamma * grad log p(text).
Raster text_grad(const Raster& z_t, int t, const NoisePredictor& predictor,
                 const PredictorContext& ctx, const Codec& codec,
                 const std::vector<double>& target, const Embedder& emb,
                 const TextGuidanceConfig& cfg, const NoiseSchedule& sched, Rng& rng);

// Folds the text gradient into the noise prediction instead of the sampler
// mean: eps_hat = eps - sqrt(1 - alpha_bar_t) * grad_log_p. With grad_log_p
// = -grad L this equals eps + sqrt(1 - alpha_bar_t) * grad L.
Raster eps_hat(const Raster& eps, int t, const NoiseSchedule& sched,
               const Raster& grad_log_p);

}  // namespace crossview
