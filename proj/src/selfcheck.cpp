#include "crossview/selfcheck.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossview/camera.hpp"
#include "crossview/commands.hpp"
#include "crossview/config.hpp"
#include "crossview/diffusion.hpp"
#include "crossview/embedder.hpp"
#include "crossview/gca.hpp"
#include "crossview/geometry.hpp"
#include "crossview/io.hpp"
#include "crossview/metrics.hpp"
#include "crossview/models.hpp"
#include "crossview/pose_align.hpp"
#include "crossview/raster.hpp"
#include "crossview/rng.hpp"
#include "crossview/synthdata.hpp"
#include "crossview/text_guidance.hpp"

namespace crossview {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kPi = 3.14159265358979323846;

NoiseSchedule default_schedule(double eta) {
    return make_schedule(50, 8.5e-4, 0.012, "linear", eta);
}

// ---------------------------------------------------------------------------
// Independent scalar references for the metric suite. Deliberately written
// with a different evaluation order than the library (two-pass central
// moments, plain summations) so shared mistakes cannot cancel.

double ref_ssim(const Raster& a, const Raster& b) {
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    double w[win][win];
    double wsum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - 5.0;
            const double dx = j - 5.0;
            w[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            wsum += w[i][j];
        }
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) w[i][j] /= wsum;

    const double c1 = 1e-4;
    const double c2 = 9e-4;
    const int ny = a.height - win + 1;
    const int nx = a.width - win + 1;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        double acc = 0.0;
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                double ma = 0.0, mb = 0.0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        ma += w[i][j] * a.at(c, y + i, x + j);
                        mb += w[i][j] * b.at(c, y + i, x + j);
                    }
                // second pass: central moments, no E[x^2]-E[x]^2 shortcut
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double da = a.at(c, y + i, x + j) - ma;
                        const double db = b.at(c, y + i, x + j) - mb;
                        va += w[i][j] * da * da;
                        vb += w[i][j] * db * db;
                        cov += w[i][j] * da * db;
                    }
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        total += acc / (static_cast<double>(ny) * nx);
    }
    return total / a.channels;
}

double ref_rmse(const Raster& a, const Raster& b) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = (static_cast<double>(a.data[i]) - b.data[i]) * 255.0;
        se += d * d;
    }
    return std::sqrt(se / static_cast<double>(a.data.size()));
}

double ref_psnr(const Raster& a, const Raster& b) {
    const double r = ref_rmse(a, b);
    if (r == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(255.0 / r);
}

double ref_sd(const Raster& a, const Raster& b) {
    const int ny = a.height - 1;
    const int nx = a.width - 1;
    double se = 0.0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double gax = 255.0 * (static_cast<double>(a.at(c, y, x + 1)) - a.at(c, y, x));
                const double gay = 255.0 * (static_cast<double>(a.at(c, y + 1, x)) - a.at(c, y, x));
                const double gbx = 255.0 * (static_cast<double>(b.at(c, y, x + 1)) - b.at(c, y, x));
                const double gby = 255.0 * (static_cast<double>(b.at(c, y + 1, x)) - b.at(c, y, x));
                const double d = (std::abs(gax) + std::abs(gay)) - (std::abs(gbx) + std::abs(gby));
                se += d * d;
            }
    const double mse = se / (static_cast<double>(a.channels) * ny * nx);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// ---------------------------------------------------------------------------
// 1. Projection oracle: ground -> satellite -> ground round trip.

CheckResult check_projection_roundtrip(const FaultInjection& fault) {
    CheckResult r{"projection round-trip", false, "", 0.0};
    const auto t0 = Clock::now();

    const CameraModel cam = PanoramaCamera{};
    const SatMeta meta{};
    Rng rng(20260817);

    const int total = 1000;
    int valid = 0;
    int over = 0;
    double max_disp = 0.0;
    for (int k = 0; k < total; ++k) {
        RelativePose pose;
        pose.sat_u = rng.uniform_range(64.0, 192.0);
        pose.sat_v = rng.uniform_range(64.0, 192.0);
        pose.yaw = rng.uniform_range(-kPi, kPi);
        pose.cam_height = 2.0;
        const double x = rng.uniform_range(0.0, static_cast<double>(camera_width(cam)) - 1e-6);
        const double y = rng.uniform_range(0.0, static_cast<double>(camera_height(cam)) - 1e-6);

        const auto s = project_ground_to_sat(cam, pose, meta, x, y, -pose.cam_height);
        if (!s) continue;  // above horizon or out of raster: not a valid sample
        ++valid;
        const auto g =
            sat_to_ground_pixel(cam, pose, meta, s->x + fault.projection_offset_px, s->y);
        if (!g) {
            ++over;
            continue;
        }
        const double d = std::hypot(g->x - x, g->y - y);
        max_disp = std::max(max_disp, d);
        if (!(d < 0.5)) ++over;
    }

    r.seconds = seconds_since(t0);
    r.pass = valid > 0 && over == 0 && r.seconds < 5.0;
    std::ostringstream os;
    os << valid << "/" << total << " valid, max displacement " << std::scientific
       << std::setprecision(2) << max_disp << " px, " << over << " over 0.5 px, " << std::fixed
       << std::setprecision(2) << r.seconds << " s";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 2. Cross-render oracle: flat-scene ground render vs warped satellite render.

CheckResult check_cross_render(const FaultInjection&) {
    CheckResult r{"cross-render consistency", false, "", 0.0};
    const auto t0 = Clock::now();

    const CameraModel cam = PanoramaCamera{};
    const SatMeta meta{};
    double worst = 0.0;
    double min_valid_fraction = 1.0;
    for (int i = 0; i < 20; ++i) {
        const SceneSpec scene = make_scene(9000 + static_cast<std::uint64_t>(i), "flat");
        Rng jit = Rng::child(2026, static_cast<std::uint64_t>(i));
        RelativePose pose;
        pose.sat_u = 128.0 + jit.uniform_range(-8.0, 8.0);
        pose.sat_v = 128.0 + jit.uniform_range(-8.0, 8.0);
        pose.yaw = jit.uniform_range(-kPi, kPi);
        pose.cam_height = 2.0;

        const Raster sat = render_satellite(scene, meta);
        const Raster gnd = render_ground(scene, pose, cam);
        const SampleGrid grid = ground_view_grid(cam, pose, meta, -pose.cam_height);
        const Raster warped = warp(sat, grid);

        double se = 0.0;
        std::size_t n = 0;
        for (int y = 0; y < gnd.height; ++y)
            for (int x = 0; x < gnd.width; ++x) {
                const std::size_t gi = static_cast<std::size_t>(y) * gnd.width + x;
                if (!grid.valid[gi]) continue;
                for (int c = 0; c < 3; ++c) {
                    const double d =
                        static_cast<double>(gnd.at(c, y, x)) - warped.at(c, y, x);
                    se += d * d;
                    ++n;
                }
            }
        min_valid_fraction = std::min(min_valid_fraction, grid.valid_fraction());
        const double rmse = n ? std::sqrt(se / static_cast<double>(n)) : 1.0;
        worst = std::max(worst, rmse);
    }

    r.seconds = seconds_since(t0);
    r.pass = worst <= 0.02 && min_valid_fraction > 0.2;
    std::ostringstream os;
    os << "worst RMSE " << std::setprecision(4) << worst << " over 20 scenes (limit 0.02), "
       << "min valid fraction " << std::setprecision(2) << min_valid_fraction;
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 3. Forward/inverse diffusion algebra.

CheckResult check_diffusion_identity(const FaultInjection&) {
    CheckResult r{"diffusion inversion", false, "", 0.0};
    const auto t0 = Clock::now();

    const NoiseSchedule sched = default_schedule(0.0);
    Rng rng(333);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const int t = 1 + static_cast<int>(rng.uniform() * 50.0);
        const Raster z0 = randn_raster(2, 6, 7, rng);
        const Raster eps = randn_raster(2, 6, 7, rng);
        const Raster z_t = forward_diffuse(z0, eps, std::min(t, 50), sched);
        const Raster rec = predict_z0(z_t, eps, std::min(t, 50), sched);
        worst = std::max(worst, static_cast<double>(max_abs_diff(rec, z0)));
    }

    r.seconds = seconds_since(t0);
    r.pass = worst <= 1e-6;
    std::ostringstream os;
    os << "max |predict_z0(forward_diffuse(z0)) - z0| = " << std::scientific
       << std::setprecision(2) << worst << " (limit 1e-6) over 100 draws";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 4. DDIM closed form vs an independent scalar recursion.

CheckResult check_ddim_closed_form(const FaultInjection&) {
    CheckResult r{"ddim closed form", false, "", 0.0};
    const auto t0 = Clock::now();

    const NoiseSchedule sched = default_schedule(0.0);
    Rng init(444);
    Raster mean(1, 4, 5);
    for (float& v : mean.data) v = static_cast<float>(init.uniform_range(0.3, 0.7));
    const double var = 0.07;
    const GaussianScoreDenoiser den(mean, var, sched);

    Raster z(1, 4, 5);
    std::vector<double> x(z.data.size());
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        z.data[i] = static_cast<float>(mean.data[i] + init.uniform_range(-1.5, 1.5));
        x[i] = static_cast<double>(z.data[i]);
    }

    Rng step_rng(123);
    Rng sentinel(123);
    const PredictorContext ctx{};
    double worst = 0.0;
    for (int t = 50; t >= 1; --t) {
        const Raster eps = den.predict(z, t, ctx);
        const DdimStep st = ddim_step(z, eps, t, sched, step_rng);
        z = st.z_prev;

        const double ab = sched.alpha_bar_at(t);
        const double abp = sched.alpha_bar_at(t - 1);
        const double marg = ab * var + 1.0 - ab;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e =
                std::sqrt(1.0 - ab) * (x[i] - std::sqrt(ab) * mean.data[i]) / marg;
            const double x0 = (x[i] - std::sqrt(1.0 - ab) * e) / std::sqrt(ab);
            x[i] = std::sqrt(abp) * x0 + std::sqrt(1.0 - abp) * e;
            worst = std::max(worst, std::abs(static_cast<double>(z.data[i]) - x[i]));
        }
    }
    const bool rng_untouched = step_rng.uniform() == sentinel.uniform();

    r.seconds = seconds_since(t0);
    r.pass = worst <= 1e-4 && rng_untouched;
    std::ostringstream os;
    os << "max per-element |library - scalar| = " << std::scientific << std::setprecision(2)
       << worst << " (limit 1e-4) across all 50 steps; eta=0 rng untouched: "
       << (rng_untouched ? "yes" : "NO");
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 5. Guidance additivity, checked bitwise against a reconstruction that
// replays the fused-term arithmetic.

CheckResult check_guidance_additivity(const FaultInjection&) {
    CheckResult r{"guidance additivity", false, "", 0.0};
    const auto t0 = Clock::now();

    const NoiseSchedule sched = default_schedule(0.0);
    Rng rng(555);
    int mismatches = 0;
    double worst_residual = 0.0;
    for (int k = 0; k < 100; ++k) {
        const int t = 1 + static_cast<int>(rng.uniform() * 50.0);
        const double lambda = (k % 4 == 0) ? 0.0 : rng.uniform_range(-2.0, 2.0);
        const double gamma = (k % 5 == 0) ? 0.0 : rng.uniform_range(-2.0, 2.0);
        const Raster z = randn_raster(3, 6, 10, rng);
        const Raster eps = randn_raster(3, 6, 10, rng);
        const Raster gp = randn_raster(3, 6, 10, rng);
        const Raster gt = randn_raster(3, 6, 10, rng);

        Rng ra(1000 + static_cast<std::uint64_t>(k));
        Rng rb(1000 + static_cast<std::uint64_t>(k));
        const Raster base =
            guided_step(z, eps, nullptr, nullptr, GuidanceWeights{0.0, 0.0},
                        std::min(t, 50), sched, ra)
                .z_prev;
        const Raster guided =
            guided_step(z, eps, &gp, &gt, GuidanceWeights{lambda, gamma}, std::min(t, 50),
                        sched, rb)
                .z_prev;

        for (std::size_t i = 0; i < base.data.size(); ++i) {
            double g = 0.0;
            if (lambda != 0.0) g += lambda * static_cast<double>(gp.data[i]);
            if (gamma != 0.0) g += gamma * static_cast<double>(gt.data[i]);
            const float expect = static_cast<float>(static_cast<double>(base.data[i]) + g);
            if (guided.data[i] != expect) ++mismatches;
            const double residual =
                std::abs((static_cast<double>(guided.data[i]) - base.data[i]) - g);
            worst_residual = std::max(worst_residual, residual);
        }
    }

    r.seconds = seconds_since(t0);
    r.pass = mismatches == 0;
    std::ostringstream os;
    os << mismatches << " element mismatches over 100 instances (bitwise); worst naive residual "
       << std::scientific << std::setprecision(2) << worst_residual;
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 6. InfoNCE floor and argmin pose selection on a candidate grid.

CheckResult check_pose_argmin(const FaultInjection&) {
    CheckResult r{"pose score minimality", false, "", 0.0};
    const auto t0 = Clock::now();

    double worst_floor = 0.0;
    {
        const std::vector<double> nine(9, 0.37);
        for (int k : {0, 4, 8})
            worst_floor = std::max(worst_floor,
                                   std::abs(info_nce(nine, k, 0.1) - std::log(9.0)));
        const std::vector<double> four(4, -1.2);
        worst_floor =
            std::max(worst_floor, std::abs(info_nce(four, 1, 0.25) - std::log(4.0)));
    }

    const CameraModel cam = PanoramaCamera{};
    const SatMeta meta{};
    const IdentityRefiner ident;
    Rng rng(666);
    int correct = 0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
        const SceneSpec scene = make_scene(7100 + static_cast<std::uint64_t>(i), "flat");
        const Raster sat = render_satellite(scene, meta);
        RelativePose truth;
        truth.sat_u = 128.0 + rng.uniform_range(-4.0, 4.0);
        truth.sat_v = 128.0 + rng.uniform_range(-4.0, 4.0);
        truth.yaw = rng.uniform_range(-kPi, kPi);
        truth.cam_height = 2.0;
        const Raster gnd = render_ground(scene, truth, cam);

        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        int idx = 0;
        for (int dv = -1; dv <= 1; ++dv)
            for (int du = -1; du <= 1; ++du, ++idx) {
                RelativePose cand = truth;
                cand.sat_u += 6.0 * du;
                cand.sat_v += 6.0 * dv;
                const AlignmentScore s =
                    alignment_score(gnd, sat, cand, cam, meta, 64, ident, ident);
                if (s.value > best_score) {
                    best_score = s.value;
                    best = idx;
                }
            }
        if (best == 4) ++correct;  // grid center == the true pose
    }

    r.seconds = seconds_since(t0);
    r.pass = worst_floor <= 1e-9 && correct >= 95;
    std::ostringstream os;
    os << "uniform-score InfoNCE off ln K by " << std::scientific << std::setprecision(2)
       << worst_floor << "; argmax correct " << correct << "/" << trials << " (need 95)";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 7. Homography recovery of an injected lateral offset under the warp oracle.

// Separable border-clamped box blur, applied in place. Three passes of this
// approximate a Gaussian closely enough for band-limiting noise.
void box_blur_inplace(Raster& img, int radius) {
    const int C = img.channels, H = img.height, W = img.width;
    const double inv = 1.0 / (2 * radius + 1);
    std::vector<float> line(static_cast<std::size_t>(std::max(H, W)));
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    s += img.at(c, y, std::min(W - 1, std::max(0, x + k)));
                line[static_cast<std::size_t>(x)] = static_cast<float>(s * inv);
            }
            for (int x = 0; x < W; ++x) img.at(c, y, x) = line[static_cast<std::size_t>(x)];
        }
        for (int x = 0; x < W; ++x) {
            for (int y = 0; y < H; ++y) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    s += img.at(c, std::min(H - 1, std::max(0, y + k)), x);
                line[static_cast<std::size_t>(y)] = static_cast<float>(s * inv);
            }
            for (int y = 0; y < H; ++y) img.at(c, y, x) = line[static_cast<std::size_t>(y)];
        }
    }
}

// Zero-mean band-limited noise raster, unit variance scaled to a fixed
// amplitude. Filtered white noise has a smooth, self-averaging autocorrelation
// with no periodic sidelobes, so a shift-alignment loss over it has a single
// basin whose curvature is stable across seeds — unlike structured patterns,
// whose repeats create spurious minima, or positive-mean images, whose DC
// component makes cosine scores insensitive to shifts.
Raster noise_field(std::uint64_t seed, int channels, int h, int w) {
    Rng rng(seed);
    Raster low = randn_raster(channels, h, w, rng);
    for (int p = 0; p < 3; ++p) box_blur_inplace(low, 6);
    double m = 0.0, m2 = 0.0;
    for (const float v : low.data) {
        m += v;
        m2 += static_cast<double>(v) * v;
    }
    m /= static_cast<double>(low.data.size());
    m2 /= static_cast<double>(low.data.size());
    const double sl = std::sqrt(std::max(1e-12, m2 - m * m));
    Raster out(channels, h, w);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(0.35 * (low.data[i] / sl));
    return out;
}

CheckResult check_homography_recovery(const FaultInjection&) {
    CheckResult r{"iha pose recovery", false, "", 0.0};
    const auto t0 = Clock::now();

    // Latent-resolution camera: the oracle denoiser pins z0 to a warped view,
    // so the latent grid IS the ground view and one latent px equals one view
    // px. The wide horizontal field keeps the whole comparison crop inside the
    // camera frustum, so moving H laterally never flips cell validity at the
    // crop edge (validity flips put flat spots in the descent landscape).
    const CameraModel cam = PinholeCamera{64, 16, 2.2};
    const SatMeta meta{};
    const NoiseSchedule sched = default_schedule(0.0);
    IhaConfig iha;
    iha.lr = 0.002;
    iha.iha_steps = 40;
    iha.candidates = 25;
    iha.tau = 0.05;
    iha.perturb_trans = 8.0;
    iha.perturb_yaw = 10.0 * kPi / 180.0;
    iha.fd_step = 1e-3;
    iha.crop = 64;

    const int trials = 50;
    int recovered = 0;
    int monotone_pairs = 0;
    int informative_pairs = 0;
    double worst_err = 0.0;
    double sum_err = 0.0;

    // Probe band: rows whose ground range lies inside the comparison crop,
    // where the alignment loss actually constrains H. The implied translation
    // is the mean displacement of H over the band; the required translation
    // comes from composing the exact forward/inverse projections of the two
    // poses.
    std::vector<double> probe_u{20.0, 28.0, 36.0, 44.0};
    std::vector<double> probe_v{13.25, 14.0, 14.75, 15.5};

    for (int i = 0; i < trials; ++i) {
        const Raster sat = noise_field(7700 + static_cast<std::uint64_t>(i), 3, meta.height, meta.width);
        Rng prng = Rng::child(7711, static_cast<std::uint64_t>(i));
        RelativePose truth;
        truth.sat_u = 128.0 + prng.uniform_range(-4.0, 4.0);
        truth.sat_v = 128.0 + prng.uniform_range(-4.0, 4.0);
        truth.yaw = 0.0;
        truth.cam_height = 2.0;
        RelativePose cond = truth;
        cond.sat_u += 6.0;  // injected lateral offset, satellite px

        const Raster target = warp(sat, ground_view_grid(cam, truth, meta, -truth.cam_height));
        const WarpOracleDenoiser oracle(target, sched);

        SamplerSetup setup;
        setup.predictor = &oracle;
        setup.sched = sched;
        setup.cam = cam;
        setup.meta = meta;
        setup.pose = cond;
        setup.sat_feat = &sat;
        setup.iha_enabled = true;
        setup.iha = iha;

        Rng zr(9900 + static_cast<std::uint64_t>(i));
        const Raster z_start = randn_raster(3, 16, 64, zr);
        const SampleResult res = run_sampler(z_start, setup, 8800 + static_cast<std::uint64_t>(i));

        for (int j = 0; j + 1 <= iha.iha_steps &&
                        j + 1 < static_cast<int>(res.trace.size());
             ++j) {
            const auto& a = res.trace[static_cast<std::size_t>(j)].l_pose;
            const auto& b = res.trace[static_cast<std::size_t>(j) + 1].l_pose;
            if (!a || !b) continue;
            ++informative_pairs;
            if (*b <= *a + 1e-9) ++monotone_pairs;
        }

        double want_x = 0.0, want_y = 0.0, got_x = 0.0, got_y = 0.0;
        int n_probe = 0;
        for (const double pu : probe_u)
            for (const double pv : probe_v) {
                const auto s = project_ground_to_sat(cam, cond, meta, pu, pv, -2.0);
                if (!s) continue;
                const auto exact = sat_to_ground_pixel(cam, truth, meta, s->x, s->y);
                const auto moved = res.h_final.apply(pu, pv);
                if (!exact || !moved) continue;
                want_x += exact->x - pu;
                want_y += exact->y - pv;
                got_x += moved->x - pu;
                got_y += moved->y - pv;
                ++n_probe;
            }
        if (n_probe < 8) continue;  // degenerate trial counts as a failure
        const double err = std::hypot((got_x - want_x) / n_probe, (got_y - want_y) / n_probe);
        worst_err = std::max(worst_err, err);
        sum_err += err;
        if (err <= 1.0) ++recovered;
    }

    r.seconds = seconds_since(t0);
    const double monotone_fraction =
        informative_pairs ? static_cast<double>(monotone_pairs) / informative_pairs : 0.0;
    r.pass = recovered >= 45 && monotone_fraction >= 0.80 && r.seconds < 600.0;
    std::ostringstream os;
    os << "translation recovered in " << recovered << "/" << trials
       << " trials (need 45); mean err " << std::setprecision(3) << sum_err / trials
       << " px, worst " << worst_err << " px; loss non-increasing "
       << std::setprecision(1) << std::fixed << 100.0 * monotone_fraction << "% of "
       << informative_pairs << " window steps (need 80%); " << std::setprecision(1)
       << r.seconds << " s (budget 600)";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 8. Finite-difference gradient oracles.

CheckResult check_gradient_oracles(const FaultInjection&) {
    CheckResult r{"gradient oracles", false, "", 0.0};
    const auto t0 = Clock::now();

    // (a) grad_h on losses with hand-derived gradients.
    double worst_h = 0.0;
    {
        const Homography ident;
        const auto translation_loss = [](const Homography& h) {
            const double d = h.m[0][2] - 3.0;
            return d * d;
        };
        const auto g1 = grad_h(translation_loss, ident, 1e-3);
        for (int i = 0; i < 8; ++i) {
            const double want = (i == 2) ? -6.0 : 0.0;
            worst_h = std::max(worst_h, std::abs(g1[static_cast<std::size_t>(i)] - want));
        }

        const auto constant_loss = [](const Homography&) { return 0.25; };
        const auto g2 = grad_h(constant_loss, ident, 1e-3);
        for (const double v : g2) worst_h = std::max(worst_h, std::abs(v));

        Rng hr(888);
        std::array<double, 8> p{};
        for (double& v : p) v = hr.uniform_range(-0.5, 0.5);
        const Homography h0 = Homography::from_params(p);
        const auto quad_loss = [](const Homography& h) {
            const auto q = h.params();
            double s = 0.0;
            for (const double v : q) s += v * v;
            return s;
        };
        const auto g3 = grad_h(quad_loss, h0, 1e-3);
        const auto q0 = h0.params();
        for (int i = 0; i < 8; ++i)
            worst_h = std::max(worst_h, std::abs(g3[static_cast<std::size_t>(i)] -
                                                 2.0 * q0[static_cast<std::size_t>(i)]));
    }

    // (b) text_grad against central differences of an independent scalar
    // double-precision loss (gaussian predictor, identity codec, mean-color
    // embedder, full-raster patches so the windows are deterministic).
    const NoiseSchedule sched = default_schedule(0.0);
    Rng rng(777);
    Raster mean(3, 8, 8);
    for (float& v : mean.data) v = static_cast<float>(rng.uniform_range(0.2, 0.8));
    const double var = 0.08;
    const GaussianScoreDenoiser den(mean, var, sched);
    Raster z(3, 8, 8);
    for (float& v : z.data) v = static_cast<float>(rng.uniform_range(0.05, 0.95));
    const int t = 30;
    const IdentityCodec codec;
    const MeanColorEmbedder emb(3);
    const std::vector<double> target = emb.embed_text("red").v;
    const TextGuidanceConfig tc{3, 0};  // three identical full-raster patches
    Rng patch_rng(4321);
    const Raster tg = text_grad(z, t, den, PredictorContext{}, codec, target, emb, tc, sched,
                                patch_rng);

    const double ab = sched.alpha_bar_at(t);
    const double marg = ab * var + 1.0 - ab;
    const double hw = static_cast<double>(z.height) * z.width;
    const auto scalar_loss = [&](const std::vector<double>& zv) {
        std::array<double, 3> m{0.0, 0.0, 0.0};
        const std::size_t plane = static_cast<std::size_t>(z.height) * z.width;
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t idx = static_cast<std::size_t>(c) * plane + i;
                const double e =
                    std::sqrt(1.0 - ab) * (zv[idx] - std::sqrt(ab) * mean.data[idx]) / marg;
                const double z0 = (zv[idx] - std::sqrt(1.0 - ab) * e) / std::sqrt(ab);
                m[static_cast<std::size_t>(c)] += z0;
            }
        for (double& v : m) v /= hw;
        const double norm = std::sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2]);
        if (norm == 0.0) return 1.0;
        const double sim = (m[0] * target[0] + m[1] * target[1] + m[2] * target[2]) / norm;
        return 1.0 - sim;
    };

    std::vector<double> zv(z.data.begin(), z.data.end());
    Rng pick(999);
    double worst_rel = 0.0;
    for (int k = 0; k < 10; ++k) {
        const std::size_t idx =
            static_cast<std::size_t>(pick.uniform() * static_cast<double>(zv.size()));
        const double delta = 1e-5;
        const double keep = zv[idx];
        zv[idx] = keep + delta;
        const double lp = scalar_loss(zv);
        zv[idx] = keep - delta;
        const double lm = scalar_loss(zv);
        zv[idx] = keep;
        const double want = -(lp - lm) / (2.0 * delta);  // text_grad returns -dL/dz
        const double got = static_cast<double>(tg.data[idx]);
        const double rel = std::abs(got - want) / std::max(std::abs(want), 1e-9);
        worst_rel = std::max(worst_rel, rel);
    }

    r.seconds = seconds_since(t0);
    r.pass = worst_h <= 1e-6 && worst_rel <= 1e-4;
    std::ostringstream os;
    os << "grad_h worst error " << std::scientific << std::setprecision(2) << worst_h
       << " (limit 1e-6); text_grad worst relative error " << worst_rel
       << " on 10 coordinates (limit 1e-4)";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 9. Text guidance moves the image toward the prompt without destroying it.

CheckResult check_text_guidance(const FaultInjection&) {
    CheckResult r{"text guidance efficacy", false, "", 0.0};
    const auto t0 = Clock::now();

    const NoiseSchedule sched = default_schedule(0.0);
    Rng mr(909);
    Raster mean(3, 32, 64);
    for (float& v : mean.data) v = static_cast<float>(0.5 + 0.05 * mr.normal());
    const GaussianScoreDenoiser den(mean, 0.05, sched);
    const MeanColorEmbedder emb(3);
    const std::vector<double> target = emb.embed_text("red").v;

    Rng zr(4242);
    const Raster z_start = randn_raster(3, 32, 64, zr);

    const std::vector<double> gammas{0.0, 0.5, 1.0, 2.0, 4.0};
    std::vector<double> red_means;
    std::optional<Raster> unguided;
    double min_ssim = 1.0;
    for (const double gamma : gammas) {
        SamplerSetup setup;
        setup.predictor = &den;
        setup.sched = sched;
        setup.weights = GuidanceWeights{0.0, gamma};
        setup.embedder = &emb;
        setup.text_target = target;
        setup.text = TextGuidanceConfig{4, 0};
        const SampleResult res = run_sampler(z_start, setup, 4242);

        red_means.push_back(channel_mean(res.image, 0));
        Raster img = res.image;
        clamp_raster(img, 0.0f, 1.0f);
        if (!unguided)
            unguided = img;
        else
            min_ssim = std::min(min_ssim, ssim(img, *unguided));
    }

    bool monotone = true;
    for (std::size_t i = 1; i < red_means.size(); ++i)
        if (red_means[i] < red_means[i - 1] - 1e-9) monotone = false;

    r.seconds = seconds_since(t0);
    r.pass = monotone && min_ssim >= 0.7;
    std::ostringstream os;
    os << "red mean " << std::setprecision(4);
    for (std::size_t i = 0; i < red_means.size(); ++i)
        os << (i ? " -> " : "") << red_means[i];
    os << " over gamma {0,0.5,1,2,4} (" << (monotone ? "non-decreasing" : "NOT monotone")
       << "); min SSIM vs unguided " << std::setprecision(3) << min_ssim << " (need 0.7)";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 10. Aggregation reductions: plane-warp equivalence, convexity, permutation
// invariance, and the linear operation count.

CheckResult check_gca_reductions(const FaultInjection&) {
    CheckResult r{"aggregation reductions", false, "", 0.0};
    const auto t0 = Clock::now();

    // (a) single ground-plane hypothesis == plane warp
    double worst_plane = 0.0;
    {
        const CameraModel cam = PanoramaCamera{128, 32};
        const SatMeta meta{0.5, 64, 64};
        RelativePose pose;
        pose.sat_u = 32.0;
        pose.sat_v = 32.0;
        pose.yaw = 0.7;
        pose.cam_height = 2.0;
        Rng vr(1010);
        Raster v(3, 64, 64);
        for (float& x : v.data) x = static_cast<float>(vr.uniform());
        const Raster q(1, 32, 128);
        const ZeroOffsetUniformPredictor pred;
        const std::vector<double> heights{-pose.cam_height};
        const GcaResult res = gca_aggregate(q, v, cam, pose, meta, pred.predict(q, heights));
        const Raster expect = warp(v, ground_view_grid(cam, pose, meta, -pose.cam_height));
        worst_plane = max_abs_diff(res.features, expect);
    }

    // (b) convexity + permutation invariance over random instances
    bool convex_ok = true;
    double worst_perm = 0.0;
    bool counts_ok = true;
    {
        const CameraModel cam = PanoramaCamera{24, 16};
        const SatMeta meta{0.5, 48, 48};
        for (int k = 0; k < 100; ++k) {
            Rng rng(5000 + static_cast<std::uint64_t>(k));
            RelativePose pose;
            pose.sat_u = 24.0;
            pose.sat_v = 24.0;
            pose.yaw = rng.uniform_range(-kPi, kPi);
            pose.cam_height = 2.0;
            Raster v(2, 48, 48);
            std::array<double, 2> vmin{1e9, 1e9};
            std::array<double, 2> vmax{-1e9, -1e9};
            for (int c = 0; c < 2; ++c)
                for (int y = 0; y < 48; ++y)
                    for (int x = 0; x < 48; ++x) {
                        const float w = static_cast<float>(rng.uniform_range(-1.0, 1.0));
                        v.at(c, y, x) = w;
                        vmin[static_cast<std::size_t>(c)] =
                            std::min(vmin[static_cast<std::size_t>(c)], static_cast<double>(w));
                        vmax[static_cast<std::size_t>(c)] =
                            std::max(vmax[static_cast<std::size_t>(c)], static_cast<double>(w));
                    }
            Raster q(2, 16, 24);
            for (float& x : q.data) x = static_cast<float>(rng.normal());
            std::vector<double> heights(5);
            for (double& h : heights) {
                h = rng.uniform_range(-3.5, 5.5);
                if (std::abs(h) < 0.25) h = 0.25;  // h == 0 never projects
            }
            const SeededLinearPredictor pred(6000 + static_cast<std::uint64_t>(k));
            const HeightHypothesisSet hyp = pred.predict(q, heights);
            const GcaResult res = gca_aggregate(q, v, cam, pose, meta, hyp);

            for (int c = 0; c < 2 && convex_ok; ++c)
                for (int y = 0; y < 16 && convex_ok; ++y)
                    for (int x = 0; x < 24; ++x) {
                        const double f = res.features.at(c, y, x);
                        const bool within =
                            (f >= vmin[static_cast<std::size_t>(c)] - 1e-6 &&
                             f <= vmax[static_cast<std::size_t>(c)] + 1e-6) ||
                            f == 0.0f;  // masked pixels output zero
                        if (!within) {
                            convex_ok = false;
                            break;
                        }
                    }

            // permute the hypothesis planes; the mix must not care
            const std::array<int, 5> perm{2, 0, 4, 1, 3};
            HeightHypothesisSet shuffled{std::vector<double>(5),
                                         Raster(5, q.height, q.width),
                                         Raster(5, q.height, q.width)};
            for (int p = 0; p < 5; ++p) {
                const int src = perm[static_cast<std::size_t>(p)];
                shuffled.heights[static_cast<std::size_t>(p)] =
                    hyp.heights[static_cast<std::size_t>(src)];
                for (int y = 0; y < q.height; ++y)
                    for (int x = 0; x < q.width; ++x) {
                        shuffled.offsets.at(p, y, x) = hyp.offsets.at(src, y, x);
                        shuffled.logits.at(p, y, x) = hyp.logits.at(src, y, x);
                    }
            }
            const GcaResult res2 = gca_aggregate(q, v, cam, pose, meta, shuffled);
            worst_perm = std::max(worst_perm,
                                  static_cast<double>(max_abs_diff(res.features, res2.features)));
            if (res.ops.total() != res2.ops.total() ||
                res.invalid_fraction != res2.invalid_fraction)
                counts_ok = false;
        }
    }

    // (c) operation count linear in N
    double ratio = 0.0;
    bool estimate_ok = false;
    {
        const CameraModel cam = PanoramaCamera{64, 24};
        const SatMeta meta{0.5, 96, 96};
        RelativePose pose;
        pose.sat_u = 48.0;
        pose.sat_v = 48.0;
        pose.yaw = -0.3;
        pose.cam_height = 2.0;
        Rng vr(2020);
        Raster v(2, 96, 96);
        for (float& x : v.data) x = static_cast<float>(vr.uniform());
        const Raster q(1, 24, 64);
        const ZeroOffsetUniformPredictor pred;
        const std::vector<double> h4{-2.0, 1.0, 2.0, 4.0};
        const std::vector<double> h8 = default_heights();
        const GcaResult r4 = gca_aggregate(q, v, cam, pose, meta, pred.predict(q, h4));
        const GcaResult r8 = gca_aggregate(q, v, cam, pose, meta, pred.predict(q, h8));
        ratio = static_cast<double>(r8.ops.total()) / static_cast<double>(r4.ops.total());
        estimate_ok = r4.ops.total() == gca_flop_estimate(4, 24, 64) &&
                      r8.ops.total() == gca_flop_estimate(8, 24, 64);
    }

    r.seconds = seconds_since(t0);
    r.pass = worst_plane <= 1e-5 && convex_ok && worst_perm <= 1e-6 && counts_ok &&
             std::abs(ratio - 2.0) <= 0.01 && estimate_ok;
    std::ostringstream os;
    os << "plane-warp max diff " << std::scientific << std::setprecision(2) << worst_plane
       << " (limit 1e-5); convexity " << (convex_ok ? "ok" : "VIOLATED")
       << "; permutation max diff " << worst_perm << " (limit 1e-6); op ratio N 4->8 = "
       << std::fixed << std::setprecision(4) << ratio << " (want 2.0 +- 0.01, closed form "
       << (estimate_ok ? "exact" : "MISMATCH") << ")";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 11. Metric suite vs the scalar references above.

CheckResult check_metric_references(const FaultInjection&) {
    CheckResult r{"metric references", false, "", 0.0};
    const auto t0 = Clock::now();

    std::vector<std::pair<Raster, Raster>> fixtures;
    {
        Rng rng(111);
        Raster a(3, 24, 32), b(3, 24, 32);
        for (float& v : a.data) v = static_cast<float>(rng.uniform());
        for (float& v : b.data) v = static_cast<float>(rng.uniform());
        fixtures.emplace_back(std::move(a), std::move(b));
    }
    {
        Rng rng(112);
        Raster a(3, 24, 32);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 24; ++y)
                for (int x = 0; x < 32; ++x)
                    a.at(c, y, x) = static_cast<float>(
                        0.5 + 0.3 * std::sin(0.4 * x + 0.7 * y + 1.3 * c));
        Raster b = a;
        for (float& v : b.data)
            v = std::clamp(v + static_cast<float>(0.04 * rng.normal()), 0.0f, 1.0f);
        fixtures.emplace_back(std::move(a), std::move(b));
    }
    {
        Raster a(1, 24, 32);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 32; ++x) a.at(0, y, x) = ((x / 4 + y / 4) & 1) ? 0.85f : 0.15f;
        Raster b(1, 24, 32);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 32; ++x) b.at(0, y, x) = a.at(0, y, std::min(x + 1, 31));
        fixtures.emplace_back(std::move(a), std::move(b));
    }

    double worst = 0.0;
    for (const auto& [a, b] : fixtures) {
        worst = std::max(worst, std::abs(ssim(a, b) - ref_ssim(a, b)));
        const RmsePsnr rp = rmse_psnr(a, b);
        worst = std::max(worst, std::abs(rp.rmse - ref_rmse(a, b)));
        worst = std::max(worst, std::abs(rp.psnr - ref_psnr(a, b)));
        worst = std::max(worst, std::abs(sharpness_diff(a, b) - ref_sd(a, b)));
    }

    double psnr_uniform = 0.0;
    {
        Rng rng(113);
        Raster a(3, 16, 16), b(3, 16, 16);
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            a.data[i] = static_cast<float>(rng.uniform_range(0.2, 0.7));
            b.data[i] = a.data[i] + 1.0f / 255.0f;
        }
        psnr_uniform = rmse_psnr(a, b).psnr;
    }

    r.seconds = seconds_since(t0);
    r.pass = worst <= 1e-4 && std::abs(psnr_uniform - 48.13) <= 0.01;
    std::ostringstream os;
    os << "worst |library - reference| = " << std::scientific << std::setprecision(2) << worst
       << " (limit 1e-4) over 3 fixtures; PSNR(uniform 1/255) = " << std::fixed
       << std::setprecision(4) << psnr_uniform << " dB (want 48.13 +- 0.01)";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 12. End-to-end sampling determinism through the CLI command layer.

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("selfcheck: cannot reopen " + p.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

CheckResult check_sampling_determinism(const FaultInjection&) {
    CheckResult r{"sampling determinism", false, "", 0.0};
    const auto t0 = Clock::now();

    const fs::path root = fs::temp_directory_path() / "crossview_selfcheck_det";
    fs::remove_all(root);
    fs::create_directories(root);

    const SceneSpec scene = make_scene(3141, "flat");
    Raster sat = render_satellite(scene, SatMeta{});
    clamp_raster(sat, 0.0f, 1.0f);
    const fs::path sat_path = root / "sat.png";
    png_write(sat, sat_path.string());

    const Config cfg = config_with(Config{}, "diffusion.eta", 0.0);
    std::ostringstream sink;

    const auto run = [&](const std::string& name, bool iha) -> fs::path {
        SampleOptions opt;
        opt.sat_path = sat_path.string();
        opt.out_dir = (root / name).string();
        opt.pose = RelativePose{128.0, 130.0, 0.3, 2.0};
        opt.seed = 77;
        opt.iha = iha;
        const int rc = cmd_sample(cfg, opt, sink);
        if (rc != exit_ok)
            throw std::runtime_error("selfcheck: cmd_sample exited with code " +
                                     std::to_string(rc));
        return root / name;
    };

    const fs::path a = run("a", false);
    const fs::path b = run("b", false);
    const fs::path c = run("c", true);
    const fs::path d = run("d", true);

    const bool plain_png = read_bytes(a / "generated.png") == read_bytes(b / "generated.png");
    const bool plain_z0 = read_bytes(a / "z0.cvt") == read_bytes(b / "z0.cvt");
    const bool iha_png = read_bytes(c / "generated.png") == read_bytes(d / "generated.png");
    const bool iha_z0 = read_bytes(c / "z0.cvt") == read_bytes(d / "z0.cvt");
    const bool distinct = read_bytes(a / "generated.png") != read_bytes(c / "generated.png");

    fs::remove_all(root);

    r.seconds = seconds_since(t0);
    r.pass = plain_png && plain_z0 && iha_png && iha_z0;
    std::ostringstream os;
    os << "repeat runs byte-identical: png " << (plain_png ? "yes" : "NO") << ", latent "
       << (plain_z0 ? "yes" : "NO") << "; with homography adjustment: png "
       << (iha_png ? "yes" : "NO") << ", latent " << (iha_z0 ? "yes" : "NO")
       << (distinct ? "" : " (warning: adjustment changed nothing)");
    r.detail = os.str();
    return r;
}

}  // namespace

FaultInjection fault_from_name(const std::string& name) {
    if (name.empty() || name == "none") return FaultInjection{};
    if (name == "projection") return FaultInjection{0.75};
    throw std::invalid_argument("unknown fault name: " + name +
                                " (expected 'none' or 'projection')");
}

std::vector<CheckResult> run_selfcheck(const FaultInjection& fault, std::ostream* log) {
    using CheckFn = CheckResult (*)(const FaultInjection&);
    const std::pair<const char*, CheckFn> checks[] = {
        {"projection round-trip", &check_projection_roundtrip},
        {"cross-render consistency", &check_cross_render},
        {"diffusion inversion", &check_diffusion_identity},
        {"ddim closed form", &check_ddim_closed_form},
        {"guidance additivity", &check_guidance_additivity},
        {"pose score minimality", &check_pose_argmin},
        {"iha pose recovery", &check_homography_recovery},
        {"gradient oracles", &check_gradient_oracles},
        {"text guidance efficacy", &check_text_guidance},
        {"aggregation reductions", &check_gca_reductions},
        {"metric references", &check_metric_references},
        {"sampling determinism", &check_sampling_determinism},
    };

    std::vector<CheckResult> out;
    out.reserve(std::size(checks));
    for (const auto& [name, fn] : checks) {
        CheckResult res;
        const auto t0 = Clock::now();
        try {
            res = fn(fault);
        } catch (const std::exception& e) {
            res.name = name;
            res.pass = false;
            res.detail = std::string("exception: ") + e.what();
            res.seconds = seconds_since(t0);
        }
        if (log)
            *log << "[selfcheck] " << res.name << ": " << (res.pass ? "ok" : "FAILED") << " ("
                 << std::fixed << std::setprecision(1) << res.seconds << " s) " << res.detail
                 << "\n"
                 << std::flush;
        out.push_back(std::move(res));
    }
    return out;
}

int selfcheck_exit(const std::vector<CheckResult>& results, std::ostream& out) {
    int failed = 0;
    double total = 0.0;
    std::size_t width = 0;
    for (const auto& res : results) width = std::max(width, res.name.size());
    for (const auto& res : results) {
        total += res.seconds;
        if (!res.pass) ++failed;
        out << (res.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(static_cast<int>(width))
            << res.name << "  " << res.detail << "\n";
    }
    out << results.size() - static_cast<std::size_t>(failed) << "/" << results.size()
        << " checks passed in " << std::fixed << std::setprecision(1) << total << " s\n";
    if (total > 300.0)
        out << "warning: selfcheck exceeded the 5 minute soft budget\n";
    if (failed) {
        out << "failed:";
        for (const auto& res : results)
            if (!res.pass) out << " '" << res.name << "'";
        out << "\n";
        return exit_numeric;
    }
    return exit_ok;
}

}  // namespace crossview
