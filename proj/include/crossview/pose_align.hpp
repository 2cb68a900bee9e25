#pragma once

#include <array>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossview/camera.hpp"
#include "crossview/diffusion.hpp"
#include "crossview/embedder.hpp"
#include "crossview/geometry.hpp"
#include "crossview/models.hpp"
#include "crossview/raster.hpp"
#include "crossview/rng.hpp"
#include "crossview/text_guidance.hpp"

namespace crossview {

// Thrown when the sampler's numeric state degenerates (e.g. the homography
// drifts to a near-singular matrix). Carries a diagnostic message; the CLI
// maps it to its own exit code.
class NumericAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-pixel channel mixer standing in for the learned refinement head that
// maps ground/satellite features into a shared space. The ground and
// satellite branches get independent instances.
class FeatureRefiner {
public:
    virtual ~FeatureRefiner() = default;
    virtual Raster refine(const Raster& feat) const = 0;
    virtual int out_channels(int in_channels) const = 0;
    // Row-major (out x in) mixing matrix when the refiner is linear per
    // pixel; nullopt otherwise. Analytic gradient chains require it.
    virtual std::optional<std::vector<double>> channel_matrix(int in_channels) const = 0;
};

class IdentityRefiner : public FeatureRefiner {
public:
    Raster refine(const Raster& feat) const override { return feat; }
    int out_channels(int in_channels) const override { return in_channels; }
    std::optional<std::vector<double>> channel_matrix(int in_channels) const override;
};

class SeededLinearRefiner : public FeatureRefiner {
public:
    SeededLinearRefiner(std::uint64_t seed, int out_channels);
    Raster refine(const Raster& feat) const override;
    int out_channels(int in_channels) const override { return out_channels_; }
    std::optional<std::vector<double>> channel_matrix(int in_channels) const override;

private:
    std::vector<double> matrix_for(int in_channels) const;
    std::uint64_t seed_;
    int out_channels_;
};

struct IhaConfig {
    double lr = 1e-3;           // base step size for H updates
    int iha_steps = 40;         // number of leading sampling steps with H updates
    int candidates = 9;         // K: specified pose plus K-1 perturbations
    double tau = 0.1;           // InfoNCE temperature
    double perturb_trans = 8.0; // max candidate offset per axis, satellite px
    double perturb_yaw = 0.17453292519943295;  // max candidate yaw offset, radians
    double fd_step = 1e-3;      // finite-difference step per H parameter
    int crop = 64;              // overhead / satellite comparison window, px
    std::string z_grad = "analytic";  // "analytic" | "zero": latent pose-gradient path
};

struct CandidatePoseSet {
    std::vector<RelativePose> poses;
    int gt_index = 0;
};

// The specified pose plus K-1 uniform perturbations (each axis within
// +-perturb_trans px, yaw within +-perturb_yaw). Throws when K < 2 or the
// perturbation window leaves the satellite raster.
CandidatePoseSet sample_candidates(const RelativePose& gt, const IhaConfig& cfg,
                                   const SatMeta& meta, Rng& rng);

struct AlignmentScore {
    double value = 0.0;
    bool degenerate = false;  // zero-norm feature vector; value forced to 0
};

// Cosine similarity between the overhead projection of the refined ground
// features and the refined satellite features cropped at the pose position
// and rotated by -yaw, over mutually valid cells. The overhead projection
// itself is pose-independent (camera-frame axes); all yaw handling lives in
// the satellite-side rotation.
AlignmentScore alignment_score(const Raster& ground_feat, const Raster& sat_feat,
                               const RelativePose& pose, const CameraModel& cam,
                               const SatMeta& meta, int crop, const FeatureRefiner& ref_g,
                               const FeatureRefiner& ref_s);

// InfoNCE over scores/tau with max-subtraction; minimal when scores[k_star]
// dominates, ln K when all scores are equal.
double info_nce(const std::vector<double>& scores, int k_star, double tau);

struct PoseLoss {
    double loss = 0.0;
    std::vector<double> scores;
};

// InfoNCE over the alignment scores of all candidates, k* = the specified
// pose. ground_feat is the decoded clean-latent prediction. Throws on
// non-finite scores.
PoseLoss pose_loss(const Raster& ground_feat, const Raster& sat_feat,
                   const CandidatePoseSet& cands, const IhaConfig& cfg,
                   const CameraModel& cam, const SatMeta& meta, const FeatureRefiner& ref_g,
                   const FeatureRefiner& ref_s);

// Central finite differences of an arbitrary loss over the 8 free parameters
// of H (m[2][2] fixed at 1). This is the normative gradient; the analytic
// path below is checked against it. Throws on non-finite probes.
std::array<double, 8> grad_h(const std::function<double(const Homography&)>& loss_fn,
                             const Homography& h, double fd_step);

// Per-slot update scaling that equalizes parameter sensitivity: each slot is
// divided by the square of its pixel gain (1 for translations, a raster
// dimension for the linear terms, a product of them for the perspective
// row), so one lr unit moves content by the same pixel distance whichever
// slot carries the gradient.
std::array<double, 8> h_update_scales(int height, int width);

// Precomputed pieces of the in-sampler pose loss: the (pose-independent)
// overhead grid and the per-candidate refined satellite crops.
struct IhaLossWorkspace {
    SampleGrid overhead;
    std::vector<SampleGrid> crop_grids;
    std::vector<Raster> crops;
    int k_star = 0;
    double tau = 0.1;
};

IhaLossWorkspace make_iha_workspace(const Raster& sat_feat, const CandidatePoseSet& cands,
                                    const RelativePose& gt, const CameraModel& cam,
                                    const SatMeta& meta, const IhaConfig& cfg,
                                    const FeatureRefiner& ref_s);

// Loss of the candidate alignment after warping the refined ground raster by
// h. The homography is folded into the overhead grid so each evaluation does
// a single interpolation pass.
double iha_loss(const Raster& ground_refined, const IhaLossWorkspace& ws, const Homography& h);
std::vector<double> iha_scores(const Raster& ground_refined, const IhaLossWorkspace& ws,
                               const Homography& h);

// Analytic gradient of iha_loss over the 8 H parameters (chain through the
// bilinear warp and the projective coordinate map, holding validity masks
// fixed). Checked against grad_h.
std::array<double, 8> iha_loss_grad_analytic(const Raster& ground_refined,
                                             const IhaLossWorkspace& ws, const Homography& h);

// -d(pose loss)/d(z_t) through refiner, warp, cosine and InfoNCE, for the
// additive guidance term. Requires a linear refiner (channel_matrix); returns
// nullopt otherwise, and the caller treats the gradient as zero.
std::optional<Raster> pose_guidance_grad(const Raster& decoded0, const IhaLossWorkspace& ws,
                                         const Homography& h, const FeatureRefiner& ref_g,
                                         const Codec& codec, int latent_height, int latent_width,
                                         double z0_scale);

struct StepTrace {
    int t = 0;
    std::optional<double> l_pose;
    std::optional<double> l_text;
    Homography h;
};

struct SamplerSetup {
    const NoisePredictor* predictor = nullptr;
    const Codec* codec = nullptr;  // null -> identity
    NoiseSchedule sched;
    GuidanceWeights weights;
    CameraModel cam;
    SatMeta meta;
    RelativePose pose;              // the specified (conditioning) pose
    const Raster* sat_feat = nullptr;

    bool iha_enabled = false;
    IhaConfig iha;
    const FeatureRefiner* refine_ground = nullptr;  // null -> identity
    const FeatureRefiner* refine_sat = nullptr;

    const Embedder* embedder = nullptr;
    std::vector<double> text_target;  // empty -> no text guidance
    TextGuidanceConfig text;

    // invoked after each step with the appended trace record
    std::function<void(const StepTrace&)> on_step;
};

struct SampleResult {
    Raster image;  // decoded final latent
    Raster z0;     // final latent
    Homography h_final;
    std::vector<StepTrace> trace;
};

// Reverse diffusion from z_T with optional pose/text guidance and optional
// homography adjustment. Per step: warp z_t by H; denoise one step with
// fused guidance; within the first iha_steps, descend H against the
// candidate alignment loss; warp the result by the updated H. The seed
// drives the step noise, candidate sampling, and patch draws through
// independent child generators, so toggling one guidance term never shifts
// the randomness of another.
SampleResult run_sampler(const Raster& z_t_start, const SamplerSetup& setup, std::uint64_t seed);

}  // namespace crossview
