#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "crossview/camera.hpp"
#include "crossview/diffusion.hpp"
#include "crossview/geometry.hpp"
#include "crossview/models.hpp"
#include "crossview/pose_align.hpp"
#include "crossview/raster.hpp"
#include "crossview/rng.hpp"

#include "test_util.hpp"

using namespace crossview;

namespace {
constexpr double kPi = 3.14159265358979323846;

const CameraModel kCam = PinholeCamera{64, 16, 2.2, 0.39269908169872414};
const SatMeta kMeta{};

RelativePose center_pose() {
    RelativePose p;
    p.sat_u = 128.0;
    p.sat_v = 128.0;
    p.yaw = 0.0;
    p.cam_height = 2.0;
    return p;
}

// Satellite content with a single correlation peak, and the exact ground view
// of it from `pose`: the alignment machinery is tested against content whose
// score landscape has one basin.
struct AlignedFixture {
    Raster sat;
    Raster ground;
    explicit AlignedFixture(std::uint64_t seed, const RelativePose& pose)
        : sat(testutil::blurred_noise(3, kMeta.height, kMeta.width, seed, 6, 3)),
          ground(warp(sat, ground_view_grid(kCam, pose, kMeta, -pose.cam_height))) {}
};
}  // namespace

TEST_CASE("info_nce hits its floor, its bounds, and is shift invariant") {
    const std::vector<double> uniform{0.3, 0.3, 0.3, 0.3};
    CHECK(info_nce(uniform, 0, 0.1) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    std::vector<double> dominant{0.9, 0.1, 0.1};
    const double sharp = info_nce(dominant, 0, 0.02);
    CHECK(sharp < 1e-10);  // the positive dwarfs the rest
    CHECK(info_nce(dominant, 1, 0.02) > 10.0);  // picking a loser is expensive

    // adding a constant to every score changes nothing (max subtraction)
    std::vector<double> shifted{1.9, 1.1, 1.1};
    CHECK(info_nce(shifted, 0, 0.02) == doctest::Approx(info_nce(dominant, 0, 0.02)));

    // higher temperature flattens the loss toward ln K
    CHECK(info_nce(dominant, 0, 10.0) > info_nce(dominant, 0, 0.1));
    CHECK(info_nce(dominant, 0, 10.0) < std::log(3.0));
}

TEST_CASE("sample_candidates puts the conditioning pose first and stays on the raster") {
    IhaConfig cfg;
    cfg.candidates = 12;
    cfg.perturb_trans = 8.0;
    cfg.perturb_yaw = 10.0 * kPi / 180.0;

    const RelativePose gt = center_pose();
    Rng rng(3);
    const CandidatePoseSet set = sample_candidates(gt, cfg, kMeta, rng);
    REQUIRE(set.poses.size() == 12);
    CHECK(set.gt_index == 0);
    CHECK(set.poses[0].sat_u == gt.sat_u);
    CHECK(set.poses[0].sat_v == gt.sat_v);
    CHECK(set.poses[0].yaw == gt.yaw);
    for (std::size_t k = 1; k < set.poses.size(); ++k) {
        CHECK(std::abs(set.poses[k].sat_u - gt.sat_u) <= 8.0);
        CHECK(std::abs(set.poses[k].sat_v - gt.sat_v) <= 8.0);
        CHECK(std::abs(set.poses[k].yaw - gt.yaw) <= cfg.perturb_yaw + 1e-12);
        CHECK(set.poses[k].cam_height == gt.cam_height);
    }

    Rng rng2(3);
    const CandidatePoseSet repeat = sample_candidates(gt, cfg, kMeta, rng2);
    for (std::size_t k = 0; k < set.poses.size(); ++k)
        CHECK(repeat.poses[k].sat_u == set.poses[k].sat_u);

    IhaConfig bad = cfg;
    bad.candidates = 1;
    Rng rng3(3);
    CHECK_THROWS_AS((void)sample_candidates(gt, bad, kMeta, rng3), std::invalid_argument);

    RelativePose edge = gt;
    edge.sat_u = 3.0;  // perturbation window would leave the raster
    Rng rng4(3);
    CHECK_THROWS_AS((void)sample_candidates(edge, cfg, kMeta, rng4), std::invalid_argument);
}

TEST_CASE("alignment score peaks at the true pose") {
    const RelativePose truth = center_pose();
    const AlignedFixture fx(100, truth);
    const IdentityRefiner ident;

    const AlignmentScore at_truth =
        alignment_score(fx.ground, fx.sat, truth, kCam, kMeta, 64, ident, ident);
    CHECK_FALSE(at_truth.degenerate);
    CHECK(at_truth.value > 0.5);

    RelativePose off = truth;
    off.sat_u += 12.0;
    const AlignmentScore at_off =
        alignment_score(fx.ground, fx.sat, off, kCam, kMeta, 64, ident, ident);
    CHECK(at_truth.value > at_off.value + 0.2);

    // a zero feature map is flagged, not scored
    const Raster zeros(3, 16, 64, 0.0f);
    const AlignmentScore degen =
        alignment_score(zeros, fx.sat, truth, kCam, kMeta, 64, ident, ident);
    CHECK(degen.degenerate);
    CHECK(degen.value == 0.0);
}

TEST_CASE("pose_loss prefers the conditioning pose on aligned content") {
    const RelativePose truth = center_pose();
    const AlignedFixture fx(101, truth);
    const IdentityRefiner ident;

    IhaConfig cfg;
    cfg.candidates = 9;
    cfg.tau = 0.05;
    Rng rng(7);
    const CandidatePoseSet cands = sample_candidates(truth, cfg, kMeta, rng);

    const PoseLoss pl = pose_loss(fx.ground, fx.sat, cands, cfg, kCam, kMeta, ident, ident);
    REQUIRE(pl.scores.size() == 9);
    int best = 0;
    for (int k = 1; k < 9; ++k)
        if (pl.scores[static_cast<std::size_t>(k)] > pl.scores[static_cast<std::size_t>(best)])
            best = k;
    CHECK(best == cands.gt_index);
    CHECK(pl.loss < std::log(9.0));  // better than an uninformed scorer
}

TEST_CASE("h_update_scales equalizes pixel gain") {
    const auto s = h_update_scales(16, 64);
    const double w = 64.0, h = 16.0;
    CHECK(s[0] == doctest::Approx(1.0 / w));
    CHECK(s[1] == doctest::Approx(w / (h * h)));
    CHECK(s[2] == doctest::Approx(w));
    CHECK(s[3] == doctest::Approx(1.0 / w));
    CHECK(s[4] == doctest::Approx(w / (h * h)));
    CHECK(s[5] == doctest::Approx(w));
    CHECK(s[6] == doctest::Approx(1.0 / (w * w * w)));
    CHECK(s[7] == doctest::Approx(1.0 / (w * h * h)));
    CHECK_THROWS_AS((void)h_update_scales(0, 4), std::invalid_argument);
}

TEST_CASE("finite-difference gradient is exact on a quadratic") {
    const std::array<double, 8> a{0.1, -0.2, 3.0, 0.4, -0.5, 6.0, 1e-3, -2e-3};
    auto loss = [&](const Homography& h) {
        const auto p = h.params();
        double s = 0.0;
        for (int i = 0; i < 8; ++i) s += (p[i] - a[i]) * (p[i] - a[i]);
        return s;
    };
    Homography h = Homography::translation(1.0, -1.0);
    const auto g = grad_h(loss, h, 1e-4);
    const auto p = h.params();
    for (int i = 0; i < 8; ++i)
        CHECK(g[i] == doctest::Approx(2.0 * (p[i] - a[i])).epsilon(1e-6));

    auto nan_loss = [](const Homography&) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS(grad_h(nan_loss, h, 1e-4));
}

TEST_CASE("analytic iha gradient matches finite differences") {
    const RelativePose truth = center_pose();
    const AlignedFixture fx(102, truth);
    const IdentityRefiner ident;

    IhaConfig cfg;
    cfg.candidates = 9;
    cfg.tau = 0.05;
    cfg.crop = 64;
    Rng rng(13);
    const CandidatePoseSet cands = sample_candidates(truth, cfg, kMeta, rng);
    const IhaLossWorkspace ws = make_iha_workspace(fx.sat, cands, truth, kCam, kMeta, cfg, ident);

    // The projective parameters make the loss strongly nonlinear, so the FD
    // probe needs a small step before it converges to the analytic value.
    const Homography h = Homography::translation(1.5, 0.25);
    const auto analytic = iha_loss_grad_analytic(fx.ground, ws, h);
    const auto fd = grad_h([&](const Homography& hh) { return iha_loss(fx.ground, ws, hh); }, h,
                           1e-5);

    double dot = 0.0, na = 0.0, nf = 0.0;
    for (int i = 0; i < 8; ++i) {
        dot += analytic[i] * fd[i];
        na += analytic[i] * analytic[i];
        nf += fd[i] * fd[i];
    }
    REQUIRE(na > 0.0);
    REQUIRE(nf > 0.0);
    const double cosine = dot / std::sqrt(na * nf);
    CHECK(cosine > 0.999);
    CHECK(std::sqrt(na) == doctest::Approx(std::sqrt(nf)).epsilon(0.01));

    // scores decompose consistently with the loss
    const auto scores = iha_scores(fx.ground, ws, h);
    REQUIRE(static_cast<int>(scores.size()) == cfg.candidates);
    CHECK(iha_loss(fx.ground, ws, h) == doctest::Approx(info_nce(scores, ws.k_star, ws.tau)));
}

TEST_CASE("pose guidance gradient scales with the latent jacobian") {
    const RelativePose truth = center_pose();
    const AlignedFixture fx(103, truth);
    const IdentityRefiner ident;
    const IdentityCodec codec;

    IhaConfig cfg;
    cfg.candidates = 9;
    Rng rng(17);
    const CandidatePoseSet cands = sample_candidates(truth, cfg, kMeta, rng);
    const IhaLossWorkspace ws = make_iha_workspace(fx.sat, cands, truth, kCam, kMeta, cfg, ident);

    const auto g1 = pose_guidance_grad(fx.ground, ws, Homography::identity(), ident, codec, 16, 64,
                                       1.0);
    REQUIRE(g1.has_value());
    REQUIRE(g1->same_shape(fx.ground));
    CHECK(g1->all_finite());

    const auto g0 = pose_guidance_grad(fx.ground, ws, Homography::identity(), ident, codec, 16, 64,
                                       0.0);
    REQUIRE(g0.has_value());
    CHECK(max_abs_diff(*g0, Raster(3, 16, 64, 0.0f)) == 0.0);

    const auto g2 = pose_guidance_grad(fx.ground, ws, Homography::identity(), ident, codec, 16, 64,
                                       2.0);
    REQUIRE(g2.has_value());
    for (std::size_t i = 0; i < g1->data.size(); ++i)
        CHECK(static_cast<double>(g2->data[i]) ==
              doctest::Approx(2.0 * static_cast<double>(g1->data[i])).epsilon(1e-5));
}

TEST_CASE("run_sampler is deterministic and traces every step") {
    const RelativePose truth = center_pose();
    RelativePose cond = truth;
    cond.sat_u += 6.0;
    const AlignedFixture fx(104, truth);
    const NoiseSchedule sched = make_schedule(50, 8.5e-4, 0.012, "linear", 0.0);
    const WarpOracleDenoiser oracle(fx.ground, sched);

    SamplerSetup setup;
    setup.predictor = &oracle;
    setup.sched = sched;
    setup.cam = kCam;
    setup.meta = kMeta;
    setup.pose = cond;
    setup.sat_feat = &fx.sat;
    setup.iha_enabled = true;
    setup.iha.lr = 0.002;
    setup.iha.candidates = 9;
    setup.iha.tau = 0.05;

    Rng zr(900);
    const Raster z_start = randn_raster(3, 16, 64, zr);

    int callbacks = 0;
    setup.on_step = [&](const StepTrace&) { ++callbacks; };

    const SampleResult a = run_sampler(z_start, setup, 42);
    CHECK(callbacks == 50);
    REQUIRE(a.trace.size() == 50);
    for (int j = 0; j < 50; ++j) {
        CHECK(a.trace[static_cast<std::size_t>(j)].t == 50 - j);
        CHECK(a.trace[static_cast<std::size_t>(j)].l_pose.has_value());
        CHECK_FALSE(a.trace[static_cast<std::size_t>(j)].l_text.has_value());
    }

    setup.on_step = nullptr;
    const SampleResult b = run_sampler(z_start, setup, 42);
    CHECK(max_abs_diff(a.z0, b.z0) == 0.0);
    CHECK(max_abs_diff(a.image, b.image) == 0.0);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(a.h_final.m[r][c] == b.h_final.m[r][c]);

    // the adjustment moved H off the identity
    const Homography id = Homography::identity();
    double drift = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) drift += std::abs(a.h_final.m[r][c] - id.m[r][c]);
    CHECK(drift > 1e-6);

    // a different seed draws different candidates, so the homography differs
    const SampleResult c = run_sampler(z_start, setup, 43);
    double seed_gap = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int cc = 0; cc < 3; ++cc) seed_gap += std::abs(a.h_final.m[r][cc] - c.h_final.m[r][cc]);
    CHECK(seed_gap > 0.0);
}

TEST_CASE("zero learning rate freezes the homography but still reports the loss") {
    const RelativePose truth = center_pose();
    const AlignedFixture fx(105, truth);
    const NoiseSchedule sched = make_schedule(50, 8.5e-4, 0.012, "linear", 0.0);
    const WarpOracleDenoiser oracle(fx.ground, sched);

    SamplerSetup setup;
    setup.predictor = &oracle;
    setup.sched = sched;
    setup.cam = kCam;
    setup.meta = kMeta;
    setup.pose = truth;
    setup.sat_feat = &fx.sat;
    setup.iha_enabled = true;
    setup.iha.lr = 0.0;

    Rng zr(901);
    const Raster z_start = randn_raster(3, 16, 64, zr);
    const SampleResult res = run_sampler(z_start, setup, 5);

    const Homography id = Homography::identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(res.h_final.m[r][c] == id.m[r][c]);
    REQUIRE_FALSE(res.trace.empty());
    CHECK(res.trace.front().l_pose.has_value());
}

TEST_CASE("a runaway learning rate aborts instead of emitting garbage") {
    const RelativePose truth = center_pose();
    RelativePose cond = truth;
    cond.sat_u += 6.0;
    const AlignedFixture fx(106, truth);
    const NoiseSchedule sched = make_schedule(50, 8.5e-4, 0.012, "linear", 0.0);
    const WarpOracleDenoiser oracle(fx.ground, sched);

    SamplerSetup setup;
    setup.predictor = &oracle;
    setup.sched = sched;
    setup.cam = kCam;
    setup.meta = kMeta;
    setup.pose = cond;
    setup.sat_feat = &fx.sat;
    setup.iha_enabled = true;
    setup.iha.lr = 1e12;
    setup.iha.candidates = 9;
    setup.iha.tau = 0.05;

    Rng zr(902);
    const Raster z_start = randn_raster(3, 16, 64, zr);
    CHECK_THROWS_AS((void)run_sampler(z_start, setup, 6), NumericAbort);
}

TEST_CASE("text guidance is traced when enabled") {
    const NoiseSchedule sched = make_schedule(50, 8.5e-4, 0.012, "linear", 0.0);
    const Raster mean = testutil::random_image(3, 16, 64, 107);
    const GaussianScoreDenoiser den(mean, 0.05, sched);
    const MeanColorEmbedder emb(3);

    SamplerSetup setup;
    setup.predictor = &den;
    setup.sched = sched;
    setup.cam = kCam;
    setup.meta = kMeta;
    setup.pose = center_pose();
    setup.weights.gamma_text = 0.5;
    setup.embedder = &emb;
    setup.text_target = emb.embed_text("red").v;
    setup.text.n_patches = 2;
    setup.text.patch_size = 8;

    Rng zr(903);
    const Raster z_start = randn_raster(3, 16, 64, zr);
    const SampleResult res = run_sampler(z_start, setup, 7);
    REQUIRE(res.trace.size() == 50);
    CHECK(res.trace.front().l_text.has_value());
    CHECK_FALSE(res.trace.front().l_pose.has_value());  // no pose machinery configured

    // guidance moves the output toward the prompt relative to gamma = 0
    SamplerSetup plain = setup;
    plain.weights.gamma_text = 0.0;
    plain.text_target.clear();
    plain.embedder = nullptr;
    const SampleResult base = run_sampler(z_start, plain, 7);
    const double guided_sim = cosine_similarity(emb.embed_image(res.image).v, setup.text_target);
    const double plain_sim =
        cosine_similarity(emb.embed_image(base.image).v, emb.embed_text("red").v);
    CHECK(guided_sim > plain_sim);
}
