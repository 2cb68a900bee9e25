#include "crossview/text_guidance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crossview {

std::vector<PatchRect> partition_offsets(int height, int width, int n_patches,
                                         int patch_size, Rng& rng) {
    if (n_patches < 1) throw std::invalid_argument("partition: need at least one patch");
    if (patch_size <= 0 || patch_size > height || patch_size > width)
        throw std::invalid_argument("partition: patch does not fit inside the raster");
    std::vector<PatchRect> out;
    out.reserve(static_cast<std::size_t>(n_patches));
    for (int i = 0; i < n_patches; ++i) {
        const int max_x = width - patch_size;
        const int max_y = height - patch_size;
        const int x = std::min(max_x, static_cast<int>(rng.uniform() * (max_x + 1)));
        const int y = std::min(max_y, static_cast<int>(rng.uniform() * (max_y + 1)));
        out.push_back({x, y, patch_size});
    }
    return out;
}

Raster extract_patch(const Raster& r, const PatchRect& p) {
    if (p.x < 0 || p.y < 0 || p.x + p.size > r.width || p.y + p.size > r.height)
        throw std::invalid_argument("patch window out of bounds");
    Raster out(r.channels, p.size, p.size);
    for (int c = 0; c < r.channels; ++c)
        for (int y = 0; y < p.size; ++y)
            for (int x = 0; x < p.size; ++x)
                out.at(c, y, x) = r.at(c, p.y + y, p.x + x);
    return out;
}

std::vector<Raster> partition_patches(const Raster& r, int n_patches, int patch_size,
                                      Rng& rng) {
    const auto rects = partition_offsets(r.height, r.width, n_patches, patch_size, rng);
    std::vector<Raster> out;
    out.reserve(rects.size());
    for (const auto& p : rects) out.push_back(extract_patch(r, p));
    return out;
}

TextLoss text_loss_at(const Raster& decoded, const std::vector<double>& target,
                      const Embedder& emb, const std::vector<PatchRect>& patches) {
    if (patches.empty()) throw std::invalid_argument("text_loss: empty patch set");
    double sim_sum = 0.0;
    bool degenerate = false;
    for (const auto& p : patches) {
        const Embedding e = emb.embed_image(extract_patch(decoded, p));
        if (e.degenerate) {
            degenerate = true;
            continue;  // sim counted as 0
        }
        double dot = 0.0;
        for (std::size_t i = 0; i < e.v.size(); ++i) dot += e.v[i] * target[i];
        sim_sum += dot;
    }
    return {1.0 - sim_sum / static_cast<double>(patches.size()), degenerate};
}

TextLoss text_loss(const Raster& decoded, const std::vector<double>& target,
                   const Embedder& emb, int n_patches, int patch_size, Rng& rng) {
    const auto rects =
        partition_offsets(decoded.height, decoded.width, n_patches, patch_size, rng);
    return text_loss_at(decoded, target, emb, rects);
}

Raster text_grad(const Raster& z_t, int t, const NoisePredictor& predictor,
                 const PredictorContext& ctx, const Codec& codec,
                 const std::vector<double>& target, const Embedder& emb,
                 const TextGuidanceConfig& cfg, const NoiseSchedule& sched, Rng& rng) {
    const Raster eps = predictor.predict(z_t, t, ctx);
    const Raster z_t0 = predict_z0(z_t, eps, t, sched);
    const Raster decoded = codec.decode(z_t0);

    int size = cfg.patch_size;
    if (size <= 0) size = std::min(decoded.height, decoded.width);
    const auto rects =
        partition_offsets(decoded.height, decoded.width, cfg.n_patches, size, rng);

    // dL/d decoded accumulated in double; L = 1 - (1/N) sum sim(patch_l)
    std::vector<double> acc(decoded.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(rects.size());
    for (const auto& p : rects) {
        const Raster patch = extract_patch(decoded, p);
        const Raster g = emb.grad_similarity(patch, target);
        for (int c = 0; c < decoded.channels; ++c)
            for (int y = 0; y < p.size; ++y)
                for (int x = 0; x < p.size; ++x) {
                    const std::size_t idx =
                        (static_cast<std::size_t>(c) * decoded.height + (p.y + y)) *
                            decoded.width +
                        (p.x + x);
                    acc[idx] -= inv_n * static_cast<double>(g.at(c, y, x));
                }
    }
    Raster d_decoded(decoded.channels, decoded.height, decoded.width);
    for (std::size_t i = 0; i < acc.size(); ++i)
        d_decoded.data[i] = static_cast<float>(acc[i]);

    Raster d_z0 = codec.decode_vjp(d_decoded, z_t0.height, z_t0.width);

    // chain rule through z_t0(z_t): exact scale when the predictor knows its
    // Jacobian, frozen-prediction convention (1/sqrt(alpha_bar)) otherwise
    double scale;
    if (const auto s = predictor.z0_jacobian_scale(t))
        scale = *s;
    else
        scale = 1.0 / std::sqrt(sched.alpha_bar_at(t));

    Raster out(z_t.channels, z_t.height, z_t.width);
    if (!d_z0.same_shape(out))
        throw std::runtime_error("text_grad: codec vjp shape does not match latent");
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(-scale * static_cast<double>(d_z0.data[i]));
    return out;
}

Raster eps_hat(const Raster& eps, int t, const NoiseSchedule& sched,
               const Raster& grad_log_p) {
    if (!eps.same_shape(grad_log_p))
        throw std::invalid_argument("eps_hat: shape mismatch");
    const double coef = std::sqrt(1.0 - sched.alpha_bar_at(t));
    return affine_combine(1.0, eps, -coef, grad_log_p);
}

}  // namespace crossview
