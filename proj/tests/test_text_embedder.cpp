#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "crossview/diffusion.hpp"
#include "crossview/embedder.hpp"
#include "crossview/models.hpp"
#include "crossview/raster.hpp"
#include "crossview/rng.hpp"
#include "crossview/text_guidance.hpp"

#include "test_util.hpp"

using namespace crossview;

namespace {
double norm_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}
}  // namespace

TEST_CASE("default lexicon entries are unit vectors") {
    const PromptLexicon lex = default_lexicon(3);
    CHECK(lex.dim == 3);
    for (const char* k : {"red", "green", "blue", "white", "spring", "summer", "autumn",
                          "winter", "night"}) {
        REQUIRE(lex.has(k));
        CHECK(norm_of(lex.at(k)) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_FALSE(lex.has("plaid"));
    CHECK_THROWS_AS((void)lex.at("plaid"), std::invalid_argument);
    CHECK_THROWS_AS((void)default_lexicon(4), std::invalid_argument);
}

TEST_CASE("lexicon json parsing normalizes and rejects zero vectors") {
    const PromptLexicon lex = lexicon_from_json_text(
        R"({"dim": 3, "prompts": {"dusk": [2.0, 0.0, 0.0]}})");
    CHECK(lex.dim == 3);
    REQUIRE(lex.has("dusk"));
    CHECK(lex.at("dusk")[0] == doctest::Approx(1.0));

    CHECK_THROWS(lexicon_from_json_text(R"({"dim": 3, "prompts": {"void": [0, 0, 0]}})"));
    CHECK_THROWS(lexicon_from_json_text("not json"));
}

TEST_CASE("mean color embedder embeds images and text consistently") {
    const MeanColorEmbedder emb(3);
    CHECK(emb.dim() == 3);

    Raster img(3, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            img.at(0, y, x) = 0.2f;
            img.at(1, y, x) = 0.4f;
            img.at(2, y, x) = 0.4f;
        }
    const Embedding e = emb.embed_image(img);
    REQUIRE(e.v.size() == 3);
    CHECK_FALSE(e.degenerate);
    CHECK(norm_of(e.v) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(e.v[0] == doctest::Approx(0.2 / 0.6));
    CHECK(e.v[1] == doctest::Approx(0.4 / 0.6));

    const Embedding red = emb.embed_text("red");
    CHECK(red.v == std::vector<double>{1.0, 0.0, 0.0});
    CHECK_THROWS_AS((void)emb.embed_text("plaid"), std::invalid_argument);

    const Raster black(3, 4, 4, 0.0f);
    CHECK(emb.embed_image(black).degenerate);

    CHECK(cosine_similarity(e.v, e.v) == doctest::Approx(1.0));
    CHECK(cosine_similarity({0.0, 0.0}, {1.0, 0.0}) == 0.0);  // degenerate yields 0
    CHECK_THROWS_AS((void)cosine_similarity({1.0}, {1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("grad_similarity matches finite differences") {
    const MeanColorEmbedder emb(3);
    Raster img = testutil::random_image(3, 6, 5, 2);
    const std::vector<double> target = emb.embed_text("autumn").v;

    const Raster grad = emb.grad_similarity(img, target);
    REQUIRE(grad.same_shape(img));

    auto loss = [&](const Raster& r) {
        const Embedding e = emb.embed_image(r);
        return cosine_similarity(e.v, target);
    };
    const double h = 1e-3;
    for (const auto [c, y, x] : {std::tuple{0, 1, 2}, {1, 4, 0}, {2, 5, 4}}) {
        Raster p = img, m = img;
        p.at(c, y, x) += static_cast<float>(h);
        m.at(c, y, x) -= static_cast<float>(h);
        const double fd = (loss(p) - loss(m)) / (2.0 * h);
        CHECK(grad.at(c, y, x) == doctest::Approx(fd).epsilon(5e-3));
    }
}

TEST_CASE("seeded linear embedder is deterministic and differentiable") {
    const SeededLinearEmbedder emb(1234, 6, 3);
    CHECK(emb.dim() == 6);

    const Raster img = testutil::random_image(3, 5, 5, 3);
    const Embedding a = emb.embed_image(img);
    const Embedding b = SeededLinearEmbedder(1234, 6, 3).embed_image(img);
    CHECK(a.v == b.v);
    CHECK(norm_of(a.v) == doctest::Approx(1.0).epsilon(1e-9));

    // keyword embeddings are unit, deterministic, and distinct
    const Embedding t1 = emb.embed_text("harbor");
    const Embedding t2 = emb.embed_text("harbor");
    const Embedding t3 = emb.embed_text("forest");
    CHECK(t1.v == t2.v);
    CHECK(norm_of(t1.v) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(t1.v != t3.v);

    const Raster grad = emb.grad_similarity(img, t1.v);
    auto loss = [&](const Raster& r) { return cosine_similarity(emb.embed_image(r).v, t1.v); };
    Raster p = img, m = img;
    const double h = 1e-3;
    p.at(1, 2, 2) += static_cast<float>(h);
    m.at(1, 2, 2) -= static_cast<float>(h);
    const double fd = (loss(p) - loss(m)) / (2.0 * h);
    CHECK(grad.at(1, 2, 2) == doctest::Approx(fd).epsilon(5e-3));
}

TEST_CASE("partition offsets are valid, deterministic, and bounded") {
    Rng r1(9), r2(9);
    const auto a = partition_offsets(32, 48, 6, 16, r1);
    const auto b = partition_offsets(32, 48, 6, 16, r2);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
        CHECK(a[i].size == 16);
        CHECK(a[i].x >= 0);
        CHECK(a[i].x + 16 <= 48);
        CHECK(a[i].y >= 0);
        CHECK(a[i].y + 16 <= 32);
    }
    Rng r3(9);
    CHECK_THROWS(partition_offsets(8, 8, 2, 16, r3));  // patch larger than the image

    const Raster img = testutil::random_image(2, 32, 48, 4);
    const PatchRect rect{5, 7, 4};
    const Raster patch = extract_patch(img, rect);
    REQUIRE(patch.channels == 2);
    REQUIRE(patch.height == 4);
    REQUIRE(patch.width == 4);
    CHECK(patch.at(1, 0, 0) == img.at(1, 7, 5));
    CHECK(patch.at(0, 3, 3) == img.at(0, 10, 8));
}

TEST_CASE("text loss vanishes on a perfectly matching image") {
    const MeanColorEmbedder emb(3);
    Raster img(3, 16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            img.at(0, y, x) = 0.8f;
            img.at(1, y, x) = 0.1f;
            img.at(2, y, x) = 0.1f;
        }
    const std::vector<double> target = emb.embed_image(img).v;

    Rng rng(5);
    const auto patches = partition_offsets(16, 16, 4, 8, rng);
    const TextLoss loss = text_loss_at(img, target, emb, patches);
    CHECK(loss.value == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_FALSE(loss.degenerate);

    // a zero image embeds degenerately: similarity counted as zero
    const Raster black(3, 16, 16, 0.0f);
    const TextLoss dloss = text_loss_at(black, target, emb, patches);
    CHECK(dloss.degenerate);
    CHECK(dloss.value == doctest::Approx(1.0));

    Rng rng2(6);
    const TextLoss drawn = text_loss(img, target, emb, 4, 8, rng2);
    CHECK(drawn.value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("eps_hat folds the guidance direction into the noise prediction") {
    const NoiseSchedule sched = make_schedule(50, 8.5e-4, 0.012, "linear", 0.0);
    const Raster eps = testutil::random_raster(2, 4, 4, 7);
    const Raster g = testutil::random_raster(2, 4, 4, 8);
    const int t = 30;
    const Raster out = eps_hat(eps, t, sched, g);
    const double root = std::sqrt(1.0 - sched.alpha_bar_at(t));
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double want = static_cast<double>(eps.data[i]) - root * static_cast<double>(g.data[i]);
        CHECK(static_cast<double>(out.data[i]) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("text gradient is zero when the clean prediction ignores z_t") {
    const NoiseSchedule sched = make_schedule(50, 8.5e-4, 0.012, "linear", 0.0);
    const Raster target_img = testutil::random_image(3, 16, 16, 9);
    const WarpOracleDenoiser oracle(target_img, sched);
    const IdentityCodec codec;
    const MeanColorEmbedder emb(3);
    const std::vector<double> target = emb.embed_text("red").v;

    const Raster zt = testutil::random_raster(3, 16, 16, 10);
    TextGuidanceConfig cfg;
    cfg.n_patches = 2;
    cfg.patch_size = 8;
    Rng rng(11);
    const Raster grad = text_grad(zt, 20, oracle, {}, codec, target, emb, cfg, sched, rng);
    REQUIRE(grad.same_shape(zt));
    CHECK(max_abs_diff(grad, Raster(3, 16, 16, 0.0f)) == 0.0);
}

TEST_CASE("text gradient pushes a gaussian model toward the prompt") {
    const NoiseSchedule sched = make_schedule(50, 8.5e-4, 0.012, "linear", 0.0);
    const Raster mean = testutil::random_image(3, 16, 16, 12);
    const GaussianScoreDenoiser den(mean, 0.05, sched);
    const IdentityCodec codec;
    const MeanColorEmbedder emb(3);
    const std::vector<double> target = emb.embed_text("red").v;

    const Raster zt = testutil::random_raster(3, 16, 16, 13);
    TextGuidanceConfig cfg;
    cfg.n_patches = 2;
    cfg.patch_size = 8;
    Rng rng(14);
    const Raster grad = text_grad(zt, 20, den, {}, codec, target, emb, cfg, sched, rng);
    REQUIRE(grad.same_shape(zt));
    CHECK(grad.all_finite());
    CHECK(max_abs_diff(grad, Raster(3, 16, 16, 0.0f)) > 0.0);

    // the returned direction raises similarity: a small step along it must
    // increase the red channel's share of the decoded prediction
    const Raster z0 = predict_z0(zt, den.predict(zt, 20, {}), 20, sched);
    const Raster stepped = affine_combine(1.0, zt, 0.5, grad);
    const Raster z0s = predict_z0(stepped, den.predict(stepped, 20, {}), 20, sched);
    const double before = cosine_similarity(emb.embed_image(z0).v, target);
    const double after = cosine_similarity(emb.embed_image(z0s).v, target);
    CHECK(after > before);
}
