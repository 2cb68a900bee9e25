#include "crossview/pose_align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace crossview {

namespace {

// S h S^{-1} with S = diag(s, s, 1): re-expresses a homography over
// coordinates scaled by s (latent grid -> decoded grid).
Homography conjugate_scale(const Homography& h, double s) {
    Homography out = h;
    out.m[0][2] *= s;
    out.m[1][2] *= s;
    out.m[2][0] /= s;
    out.m[2][1] /= s;
    return out;
}

struct ScoreParts {
    double s = 0.0;
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    bool degenerate = false;
};

// Cosine over cells valid in both grids, all channels, double accumulation.
ScoreParts score_parts(const Raster& a, const SampleGrid& a_grid, const Raster& b,
                       const SampleGrid& b_grid) {
    if (a.channels != b.channels)
        throw std::invalid_argument("alignment: refined feature channels differ");
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("alignment: comparison windows differ in size");
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    const std::size_t cells = a_grid.size();
    for (std::size_t i = 0; i < cells; ++i) {
        if (!a_grid.valid[i] || !b_grid.valid[i]) continue;
        for (int c = 0; c < a.channels; ++c) {
            const double va = a.data[static_cast<std::size_t>(c) * cells + i];
            const double vb = b.data[static_cast<std::size_t>(c) * cells + i];
            dot += va * vb;
            na2 += va * va;
            nb2 += vb * vb;
        }
    }
    ScoreParts p;
    if (!(na2 > 0.0) || !(nb2 > 0.0)) {
        p.degenerate = true;
        return p;
    }
    p.na = std::sqrt(na2);
    p.nb = std::sqrt(nb2);
    p.dot = dot;
    p.s = dot / (p.na * p.nb);
    return p;
}

std::vector<ScoreParts> all_score_parts(const Raster& ov, const SampleGrid& composed,
                                        const IhaLossWorkspace& ws) {
    std::vector<ScoreParts> parts;
    parts.reserve(ws.crops.size());
    for (std::size_t k = 0; k < ws.crops.size(); ++k)
        parts.push_back(score_parts(ov, composed, ws.crops[k], ws.crop_grids[k]));
    return parts;
}

std::vector<double> scores_of(const std::vector<ScoreParts>& parts) {
    std::vector<double> s;
    s.reserve(parts.size());
    for (const auto& p : parts) s.push_back(p.s);
    return s;
}

// dL/dS_k of InfoNCE: (softmax_k - delta_{k,k*}) / tau.
std::vector<double> info_nce_backward(const std::vector<double>& scores, int k_star,
                                      double tau) {
    double m = -std::numeric_limits<double>::infinity();
    for (double s : scores) m = std::max(m, s / tau);
    double z = 0.0;
    std::vector<double> grad(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k) {
        grad[k] = std::exp(scores[k] / tau - m);
        z += grad[k];
    }
    for (std::size_t k = 0; k < scores.size(); ++k) {
        grad[k] = grad[k] / z;
        if (static_cast<int>(k) == k_star) grad[k] -= 1.0;
        grad[k] /= tau;
    }
    return grad;
}

// Accumulates dL/d(ov) over all candidates on the composed-valid cells.
Raster overhead_upstream(const Raster& ov, const SampleGrid& composed,
                         const IhaLossWorkspace& ws, const std::vector<ScoreParts>& parts,
                         const std::vector<double>& dl_ds) {
    const std::size_t cells = composed.size();
    std::vector<double> acc(ov.size(), 0.0);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const ScoreParts& p = parts[k];
        if (p.degenerate || dl_ds[k] == 0.0) continue;
        const double c1 = dl_ds[k] / (p.na * p.nb);
        const double c2 = dl_ds[k] * p.s / (p.na * p.na);
        const Raster& crop = ws.crops[k];
        const SampleGrid& cg = ws.crop_grids[k];
        for (std::size_t i = 0; i < cells; ++i) {
            if (!composed.valid[i] || !cg.valid[i]) continue;
            for (int c = 0; c < ov.channels; ++c) {
                const std::size_t j = static_cast<std::size_t>(c) * cells + i;
                acc[j] += c1 * crop.data[j] - c2 * ov.data[j];
            }
        }
    }
    Raster out(ov.channels, ov.height, ov.width);
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i]);
    return out;
}

}  // namespace

std::optional<std::vector<double>> IdentityRefiner::channel_matrix(int in_channels) const {
    std::vector<double> m(static_cast<std::size_t>(in_channels) * in_channels, 0.0);
    for (int i = 0; i < in_channels; ++i) m[static_cast<std::size_t>(i) * in_channels + i] = 1.0;
    return m;
}

SeededLinearRefiner::SeededLinearRefiner(std::uint64_t seed, int out_channels)
    : seed_(seed), out_channels_(out_channels) {
    if (out_channels <= 0)
        throw std::invalid_argument("SeededLinearRefiner: out_channels must be positive");
}

std::vector<double> SeededLinearRefiner::matrix_for(int in_channels) const {
    Rng rng(seed_ ^ (static_cast<std::uint64_t>(in_channels) * 0x9e3779b97f4a7c15ull));
    std::vector<double> m(static_cast<std::size_t>(out_channels_) * in_channels);
    for (double& w : m) w = rng.normal() / std::sqrt(static_cast<double>(in_channels));
    return m;
}

Raster SeededLinearRefiner::refine(const Raster& feat) const {
    const std::vector<double> m = matrix_for(feat.channels);
    Raster out(out_channels_, feat.height, feat.width);
    const std::size_t plane = feat.plane_size();
    for (int o = 0; o < out_channels_; ++o)
        for (std::size_t i = 0; i < plane; ++i) {
            double s = 0.0;
            for (int c = 0; c < feat.channels; ++c)
                s += m[static_cast<std::size_t>(o) * feat.channels + c] *
                     feat.data[static_cast<std::size_t>(c) * plane + i];
            out.data[static_cast<std::size_t>(o) * plane + i] = static_cast<float>(s);
        }
    return out;
}

std::optional<std::vector<double>> SeededLinearRefiner::channel_matrix(int in_channels) const {
    return matrix_for(in_channels);
}

CandidatePoseSet sample_candidates(const RelativePose& gt, const IhaConfig& cfg,
                                   const SatMeta& meta, Rng& rng) {
    if (cfg.candidates < 2)
        throw std::invalid_argument("sample_candidates: need at least two candidates");
    if (cfg.perturb_trans < 0.0 || cfg.perturb_yaw < 0.0)
        throw std::invalid_argument("sample_candidates: negative perturbation window");
    if (gt.sat_u - cfg.perturb_trans < 0.0 ||
        gt.sat_u + cfg.perturb_trans >= static_cast<double>(meta.width) ||
        gt.sat_v - cfg.perturb_trans < 0.0 ||
        gt.sat_v + cfg.perturb_trans >= static_cast<double>(meta.height))
        throw std::invalid_argument(
            "sample_candidates: perturbation window exceeds the satellite raster");

    CandidatePoseSet out;
    out.gt_index = 0;
    out.poses.push_back(gt);
    for (int k = 1; k < cfg.candidates; ++k) {
        RelativePose p = gt;
        p.sat_u += rng.uniform_range(-cfg.perturb_trans, cfg.perturb_trans);
        p.sat_v += rng.uniform_range(-cfg.perturb_trans, cfg.perturb_trans);
        p.yaw = wrap_angle(gt.yaw + rng.uniform_range(-cfg.perturb_yaw, cfg.perturb_yaw));
        out.poses.push_back(p);
    }
    return out;
}

AlignmentScore alignment_score(const Raster& ground_feat, const Raster& sat_feat,
                               const RelativePose& pose, const CameraModel& cam,
                               const SatMeta& meta, int crop, const FeatureRefiner& ref_g,
                               const FeatureRefiner& ref_s) {
    if (crop <= 0) throw std::invalid_argument("alignment_score: crop must be positive");
    RelativePose overhead_pose = pose;
    overhead_pose.yaw = 0.0;  // camera-frame overhead; yaw lives in the satellite crop
    const SampleGrid og = overhead_grid(cam, overhead_pose, meta, crop);
    const SampleGrid sg = satellite_crop_grid(pose, meta, crop);
    const Raster ov = warp(ref_g.refine(ground_feat), og);
    const Raster sc = warp(ref_s.refine(sat_feat), sg);
    const ScoreParts p = score_parts(ov, og, sc, sg);
    return {p.s, p.degenerate};
}

double info_nce(const std::vector<double>& scores, int k_star, double tau) {
    if (scores.empty()) throw std::invalid_argument("info_nce: empty score set");
    if (k_star < 0 || k_star >= static_cast<int>(scores.size()))
        throw std::invalid_argument("info_nce: k* out of range");
    if (!(tau > 0.0)) throw std::invalid_argument("info_nce: tau must be positive");
    double m = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::domain_error("info_nce: non-finite score");
        m = std::max(m, s / tau);
    }
    double z = 0.0;
    for (double s : scores) z += std::exp(s / tau - m);
    return -(scores[static_cast<std::size_t>(k_star)] / tau - m) + std::log(z);
}

PoseLoss pose_loss(const Raster& ground_feat, const Raster& sat_feat,
                   const CandidatePoseSet& cands, const IhaConfig& cfg,
                   const CameraModel& cam, const SatMeta& meta, const FeatureRefiner& ref_g,
                   const FeatureRefiner& ref_s) {
    if (cands.poses.empty()) throw std::invalid_argument("pose_loss: empty candidate set");
    PoseLoss out;
    out.scores.reserve(cands.poses.size());
    for (const RelativePose& p : cands.poses)
        out.scores.push_back(
            alignment_score(ground_feat, sat_feat, p, cam, meta, cfg.crop, ref_g, ref_s).value);
    for (double s : out.scores)
        if (!std::isfinite(s)) throw std::domain_error("pose_loss: non-finite alignment score");
    out.loss = info_nce(out.scores, cands.gt_index, cfg.tau);
    return out;
}

std::array<double, 8> grad_h(const std::function<double(const Homography&)>& loss_fn,
                             const Homography& h, double fd_step) {
    if (!(fd_step > 0.0)) throw std::invalid_argument("grad_H: fd_step must be positive");
    const std::array<double, 8> p0 = h.params();
    std::array<double, 8> g{};
    for (int i = 0; i < 8; ++i) {
        std::array<double, 8> p = p0;
        p[static_cast<std::size_t>(i)] = p0[static_cast<std::size_t>(i)] + fd_step;
        const double lp = loss_fn(Homography::from_params(p));
        p[static_cast<std::size_t>(i)] = p0[static_cast<std::size_t>(i)] - fd_step;
        const double lm = loss_fn(Homography::from_params(p));
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw std::domain_error("grad_H: non-finite probe evaluation");
        g[static_cast<std::size_t>(i)] = (lp - lm) / (2.0 * fd_step);
    }
    return g;
}

std::array<double, 8> h_update_scales(int height, int width) {
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("h_update_scales: dimensions must be positive");
    const double w = static_cast<double>(width);
    const double h = static_cast<double>(height);
    // Each slot is scaled by W / G^2, G being the slot's maximum pixel gain
    // (pixels of displacement per unit parameter change: 1 for translations,
    // W or H for the linear terms, W^2 / W*H for the perspective row). A
    // unit of lr then moves the warped content by the same number of pixels
    // regardless of which parameter carries the gradient.
    return {w / (w * w), w / (h * h), w,         w / (w * w),
            w / (h * h), w,           1.0 / (w * w * w), 1.0 / (w * h * h)};
}

IhaLossWorkspace make_iha_workspace(const Raster& sat_feat, const CandidatePoseSet& cands,
                                    const RelativePose& gt, const CameraModel& cam,
                                    const SatMeta& meta, const IhaConfig& cfg,
                                    const FeatureRefiner& ref_s) {
    if (cfg.crop <= 0) throw std::invalid_argument("iha workspace: crop must be positive");
    if (cands.poses.empty()) throw std::invalid_argument("iha workspace: empty candidate set");
    IhaLossWorkspace ws;
    RelativePose overhead_pose = gt;
    overhead_pose.yaw = 0.0;
    ws.overhead = overhead_grid(cam, overhead_pose, meta, cfg.crop);
    const Raster rs = ref_s.refine(sat_feat);
    ws.crops.reserve(cands.poses.size());
    ws.crop_grids.reserve(cands.poses.size());
    for (const RelativePose& p : cands.poses) {
        SampleGrid g = satellite_crop_grid(p, meta, cfg.crop);
        ws.crops.push_back(warp(rs, g));
        ws.crop_grids.push_back(std::move(g));
    }
    ws.k_star = cands.gt_index;
    ws.tau = cfg.tau;
    return ws;
}

std::vector<double> iha_scores(const Raster& ground_refined, const IhaLossWorkspace& ws,
                               const Homography& h) {
    const SampleGrid composed =
        compose_grid(ws.overhead, h, ground_refined.height, ground_refined.width);
    const Raster ov = warp(ground_refined, composed);
    return scores_of(all_score_parts(ov, composed, ws));
}

double iha_loss(const Raster& ground_refined, const IhaLossWorkspace& ws, const Homography& h) {
    return info_nce(iha_scores(ground_refined, ws, h), ws.k_star, ws.tau);
}

std::array<double, 8> iha_loss_grad_analytic(const Raster& ground_refined,
                                             const IhaLossWorkspace& ws, const Homography& h) {
    const SampleGrid composed =
        compose_grid(ws.overhead, h, ground_refined.height, ground_refined.width);
    const Raster ov = warp(ground_refined, composed);
    const auto parts = all_score_parts(ov, composed, ws);
    const auto dl_ds = info_nce_backward(scores_of(parts), ws.k_star, ws.tau);
    const Raster up = overhead_upstream(ov, composed, ws, parts, dl_ds);

    const int sw = ground_refined.width;
    const int sh = ground_refined.height;
    std::array<double, 8> g{};
    const std::size_t cells = composed.size();
    for (std::size_t i = 0; i < cells; ++i) {
        if (!composed.valid[i]) continue;
        // source point of the overhead grid, before the homography
        const double p = ws.overhead.x[i];
        const double q = ws.overhead.y[i];
        const double wd = h.m[2][0] * p + h.m[2][1] * q + h.m[2][2];
        if (wd <= 1e-8) continue;
        const double x = (h.m[0][0] * p + h.m[0][1] * q + h.m[0][2]) / wd;
        const double y = (h.m[1][0] * p + h.m[1][1] * q + h.m[1][2]) / wd;

        const double cx = std::clamp(x, 0.0, static_cast<double>(sw - 1));
        const double cy = std::clamp(y, 0.0, static_cast<double>(sh - 1));
        const int x0 = static_cast<int>(cx);
        const int y0 = static_cast<int>(cy);
        const int x1 = std::min(x0 + 1, sw - 1);
        const int y1 = std::min(y0 + 1, sh - 1);
        const double fx = cx - x0;
        const double fy = cy - y0;

        double gx = 0.0, gy = 0.0;  // dL/dx, dL/dy at this sample
        for (int c = 0; c < ground_refined.channels; ++c) {
            const double u = up.data[static_cast<std::size_t>(c) * cells + i];
            if (u == 0.0) continue;
            const double v00 = ground_refined.at(c, y0, x0);
            const double v01 = ground_refined.at(c, y0, x1);
            const double v10 = ground_refined.at(c, y1, x0);
            const double v11 = ground_refined.at(c, y1, x1);
            gx += u * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
            gy += u * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
        }
        // projective derivatives of (x, y) w.r.t. the 8 parameters
        g[0] += gx * p / wd;
        g[1] += gx * q / wd;
        g[2] += gx / wd;
        g[3] += gy * p / wd;
        g[4] += gy * q / wd;
        g[5] += gy / wd;
        g[6] += -(gx * x + gy * y) * p / wd;
        g[7] += -(gx * x + gy * y) * q / wd;
    }
    return g;
}

std::optional<Raster> pose_guidance_grad(const Raster& decoded0, const IhaLossWorkspace& ws,
                                         const Homography& h, const FeatureRefiner& ref_g,
                                         const Codec& codec, int latent_height,
                                         int latent_width, double z0_scale) {
    const auto matrix = ref_g.channel_matrix(decoded0.channels);
    if (!matrix) return std::nullopt;
    const int out_ch = ref_g.out_channels(decoded0.channels);

    const Raster refined = ref_g.refine(decoded0);
    const SampleGrid composed = compose_grid(ws.overhead, h, refined.height, refined.width);
    const Raster ov = warp(refined, composed);
    const auto parts = all_score_parts(ov, composed, ws);
    const auto dl_ds = info_nce_backward(scores_of(parts), ws.k_star, ws.tau);
    const Raster up = overhead_upstream(ov, composed, ws, parts, dl_ds);

    const Raster d_refined = warp_scatter_transpose(up, composed, refined.height, refined.width);

    // transpose of the per-pixel channel mix
    Raster d_decoded(decoded0.channels, decoded0.height, decoded0.width);
    const std::size_t plane = d_decoded.plane_size();
    for (int c = 0; c < decoded0.channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            double s = 0.0;
            for (int o = 0; o < out_ch; ++o)
                s += (*matrix)[static_cast<std::size_t>(o) * decoded0.channels + c] *
                     d_refined.data[static_cast<std::size_t>(o) * plane + i];
            d_decoded.data[static_cast<std::size_t>(c) * plane + i] = static_cast<float>(s);
        }

    const Raster d_z0 = codec.decode_vjp(d_decoded, latent_height, latent_width);
    Raster out(d_z0.channels, d_z0.height, d_z0.width);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(-z0_scale * static_cast<double>(d_z0.data[i]));
    return out;
}

SampleResult run_sampler(const Raster& z_t_start, const SamplerSetup& setup, std::uint64_t seed) {
    if (setup.predictor == nullptr)
        throw std::invalid_argument("run_sampler: a noise predictor is required");
    const int steps = setup.sched.steps;
    if (steps <= 0) throw std::invalid_argument("run_sampler: empty schedule");

    const IdentityCodec identity_codec;
    const Codec& codec = setup.codec ? *setup.codec : identity_codec;
    const IdentityRefiner identity_refiner;
    const FeatureRefiner& ref_g = setup.refine_ground ? *setup.refine_ground : identity_refiner;
    const FeatureRefiner& ref_s = setup.refine_sat ? *setup.refine_sat : identity_refiner;

    const bool text_on = setup.weights.gamma_text != 0.0 && !setup.text_target.empty();
    if (setup.weights.gamma_text != 0.0 && !setup.text_target.empty() &&
        setup.embedder == nullptr)
        throw std::invalid_argument("run_sampler: text guidance requires an embedder");
    const bool pose_machinery = setup.iha_enabled || setup.weights.lambda_pose != 0.0;
    if (pose_machinery && setup.sat_feat == nullptr)
        throw std::invalid_argument("run_sampler: pose machinery requires satellite features");
    if (setup.iha_enabled && (setup.iha.iha_steps < 0 || setup.iha.iha_steps > steps))
        throw std::invalid_argument("run_sampler: iha_steps must lie within the schedule");

    // independent randomness per concern: toggling one guidance term must not
    // shift another's draws
    Rng noise_rng = Rng::child(seed, 0x6e015e);
    std::optional<IhaLossWorkspace> ws;
    if (pose_machinery) {
        Rng cand_rng = Rng::child(seed, 0xca4d5);
        const CandidatePoseSet cands =
            sample_candidates(setup.pose, setup.iha, setup.meta, cand_rng);
        ws = make_iha_workspace(*setup.sat_feat, cands, setup.pose, setup.cam, setup.meta,
                                setup.iha, ref_s);
    }

    const PredictorContext ctx{setup.sat_feat, &setup.pose};
    Homography h;  // identity
    Raster z = z_t_start;
    SampleResult res;
    res.trace.reserve(static_cast<std::size_t>(steps));
    const std::array<double, 8> scales = h_update_scales(z.height, z.width);

    for (int t = steps; t >= 1; --t) {
        const int step_index = steps - t;
        if (setup.iha_enabled) z = warp(z, homography_grid(h, z.height, z.width));

        const Raster eps = setup.predictor->predict(z, t, ctx);
        const Raster z_t0 = predict_z0(z, eps, t, setup.sched);

        StepTrace rec;
        rec.t = t;

        std::optional<Raster> decoded0;
        auto decoded = [&]() -> const Raster& {
            if (!decoded0) decoded0 = codec.decode(z_t0);
            return *decoded0;
        };
        // homography expressed over decoded-image coordinates when the codec
        // changes resolution
        const auto loss_h = [&](const Homography& hp) -> Homography {
            const double ratio = static_cast<double>(decoded().width) / z.width;
            return ratio == 1.0 ? hp : conjugate_scale(hp, ratio);
        };

        double z0_scale;
        if (const auto js = setup.predictor->z0_jacobian_scale(t))
            z0_scale = *js;
        else
            z0_scale = 1.0 / std::sqrt(setup.sched.alpha_bar_at(t));

        std::optional<Raster> pg;
        if (setup.weights.lambda_pose != 0.0 && ws && setup.iha.z_grad == "analytic" &&
            z0_scale != 0.0)
            pg = pose_guidance_grad(decoded(), *ws, loss_h(h), ref_g, codec, z.height, z.width,
                                    z0_scale);

        std::optional<Raster> tg;
        if (text_on) {
            Rng patch_rng = Rng::child(seed, 0x7e870000ull + static_cast<std::uint64_t>(t));
            tg = text_grad(z, t, *setup.predictor, ctx, codec, setup.text_target,
                           *setup.embedder, setup.text, setup.sched, patch_rng);
        }

        DdimStep step = guided_step(z, eps, pg ? &*pg : nullptr, tg ? &*tg : nullptr,
                                    setup.weights, t, setup.sched, noise_rng);

        if (ws) {
            const Raster ground_refined = ref_g.refine(decoded());
            rec.l_pose = iha_loss(ground_refined, *ws, loss_h(h));
            if (setup.iha_enabled && step_index < setup.iha.iha_steps && setup.iha.lr != 0.0) {
                const auto g = grad_h(
                    [&](const Homography& hp) {
                        return iha_loss(ground_refined, *ws, loss_h(hp));
                    },
                    h, setup.iha.fd_step);
                auto p = h.params();
                for (int i = 0; i < 8; ++i)
                    p[static_cast<std::size_t>(i)] -=
                        setup.iha.lr * scales[static_cast<std::size_t>(i)] *
                        g[static_cast<std::size_t>(i)];
                h = Homography::from_params(p);
                const double cond = h.condition_number();
                if (!(cond <= 1e8)) {
                    rec.h = h;
                    res.trace.push_back(rec);
                    if (setup.on_step) setup.on_step(rec);
                    std::ostringstream msg;
                    msg << "homography adjustment diverged at t=" << t
                        << " (condition number " << cond << ")";
                    throw NumericAbort(msg.str());
                }
            }
        }

        if (text_on) {
            Rng patch_rng = Rng::child(seed, 0x7e870000ull + static_cast<std::uint64_t>(t));
            int ps = setup.text.patch_size;
            if (ps <= 0) ps = std::min(decoded().height, decoded().width);
            rec.l_text = text_loss(decoded(), setup.text_target, *setup.embedder,
                                   setup.text.n_patches, ps, patch_rng)
                             .value;
        }

        Raster z_next = std::move(step.z_prev);
        if (setup.iha_enabled)
            z_next = warp(z_next, homography_grid(h, z_next.height, z_next.width));

        rec.h = h;
        res.trace.push_back(rec);
        if (setup.on_step) setup.on_step(rec);
        z = std::move(z_next);
    }

    res.z0 = z;
    res.image = codec.decode(res.z0);
    res.h_final = h;
    return res;
}

}  // namespace crossview
