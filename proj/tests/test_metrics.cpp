#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "crossview/embedder.hpp"
#include "crossview/metrics.hpp"
#include "crossview/raster.hpp"

#include "test_util.hpp"

using namespace crossview;

TEST_CASE("identical images are the fixed points of every metric") {
    const Raster a = testutil::random_image(3, 24, 32, 1);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    const RmsePsnr rp = rmse_psnr(a, a);
    CHECK(rp.rmse == 0.0);
    CHECK(std::isinf(rp.psnr));
    CHECK(std::isinf(sharpness_diff(a, a)));

    const MeanColorEmbedder emb(3);
    const FeatureDistance fd = feature_distance(a, a, emb);
    CHECK(fd.value == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_FALSE(fd.degenerate);
}

TEST_CASE("rmse and psnr on a known offset") {
    const Raster zero(1, 16, 16, 0.0f);
    const Raster one_level(1, 16, 16, 1.0f / 255.0f);
    const RmsePsnr rp = rmse_psnr(zero, one_level);
    CHECK(rp.rmse == doctest::Approx(1.0).epsilon(1e-6));            // one 8-bit level (float-rounded)
    CHECK(rp.psnr == doctest::Approx(20.0 * std::log10(255.0)));     // 48.13 dB

    // SSIM penalizes structural change more than a constant shift
    const Raster noisy = [&] {
        Raster n = testutil::random_image(1, 16, 16, 7);
        return n;
    }();
    CHECK(ssim(zero, one_level) > ssim(noisy, one_level));
}

TEST_CASE("ssim is symmetric and bounded") {
    const Raster a = testutil::random_image(3, 20, 20, 3);
    const Raster b = testutil::random_image(3, 20, 20, 4);
    const double sab = ssim(a, b);
    const double sba = ssim(b, a);
    CHECK(sab == doctest::Approx(sba).epsilon(1e-12));
    CHECK(sab <= 1.0);
    CHECK(sab >= -1.0);
}

TEST_CASE("crop_sky keeps the lower rows") {
    const Raster r = testutil::random_image(2, 10, 6, 5);
    const Raster c = crop_sky(r, 0.5);
    REQUIRE(c.height == 5);
    REQUIRE(c.width == 6);
    for (int ch = 0; ch < 2; ++ch)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 6; ++x) CHECK(c.at(ch, y, x) == r.at(ch, y + 5, x));

    const Raster full = crop_sky(r, 0.0);
    CHECK(max_abs_diff(full, r) == 0.0);

    // floor(0.33 * 10) = 3 rows removed
    CHECK(crop_sky(r, 0.33).height == 7);
}

TEST_CASE("feature distance separates orthogonal mean colors") {
    Raster red(3, 8, 8);
    Raster green(3, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            red.at(0, y, x) = 1.0f;
            green.at(1, y, x) = 1.0f;
        }
    const MeanColorEmbedder emb(3);
    const FeatureDistance fd = feature_distance(red, green, emb);
    CHECK(fd.value == doctest::Approx(1.0).epsilon(1e-9));  // cosine 0

    const Raster black(3, 8, 8, 0.0f);
    const FeatureDistance dg = feature_distance(red, black, emb);
    CHECK(dg.degenerate);
}

TEST_CASE("evaluate_pair crops, computes, and annotates") {
    const Raster a = testutil::random_image(3, 16, 16, 8);
    const Raster b = testutil::random_image(3, 16, 16, 9);
    const std::vector<std::string> metrics{"ssim", "rmse", "psnr", "sd", "feature_distance"};
    const MeanColorEmbedder emb(3);

    const MetricReport rep = evaluate_pair(a, b, metrics, 0.25, &emb);
    CHECK(rep.sky_crop_rows == 4);
    const Raster ca = crop_sky(a, 0.25);
    const Raster cb = crop_sky(b, 0.25);
    CHECK(rep.values.at("ssim") == doctest::Approx(ssim(ca, cb)));
    CHECK(rep.values.at("rmse") == doctest::Approx(rmse_psnr(ca, cb).rmse));
    CHECK(rep.values.at("psnr") == doctest::Approx(rmse_psnr(ca, cb).psnr));
    CHECK(rep.values.at("sd") == doctest::Approx(sharpness_diff(ca, cb)));
    CHECK(rep.values.at("feature_distance") ==
          doctest::Approx(feature_distance(ca, cb, emb).value));

    // no embedder: the metric is reported as missing, not silently dropped
    const MetricReport noemb = evaluate_pair(a, b, {"feature_distance"}, 0.0, nullptr);
    CHECK(std::isnan(noemb.values.at("feature_distance")));
    CHECK(noemb.notes.count("feature_distance") == 1);

    CHECK_THROWS_AS((void)evaluate_pair(a, b, {"vibes"}, 0.0, nullptr), std::invalid_argument);
}

TEST_CASE("json report turns non-finite values into null with a note") {
    const Raster a = testutil::random_image(1, 16, 16, 10);
    MetricReport rep = evaluate_pair(a, a, {"ssim", "psnr"}, 0.0, nullptr);
    rep.image_a = "gen.png";
    rep.image_b = "ref.png";

    const nlohmann::json j = nlohmann::json::parse(metric_report_json(rep));
    CHECK(j["image_a"] == "gen.png");
    CHECK(j["sky_crop_rows"] == 0);
    CHECK(j["metrics"]["ssim"].get<double>() == doctest::Approx(1.0));
    CHECK(j["metrics"]["psnr"].is_null());  // +inf has no JSON representation
    CHECK(j["notes"].contains("psnr"));
}

TEST_CASE("csv header and row line up") {
    const std::vector<std::string> metrics{"ssim", "rmse"};
    const std::string header = metric_report_csv_header(metrics);
    CHECK(header == "image_a,image_b,sky_crop_rows,ssim,rmse");

    MetricReport rep;
    rep.image_a = "x.png";
    rep.image_b = "y.png";
    rep.sky_crop_rows = 2;
    rep.values["ssim"] = 0.5;
    rep.values["rmse"] = 3.25;
    const std::string row = metric_report_csv_row(rep, metrics);
    CHECK(row.rfind("x.png,y.png,2,", 0) == 0);
    CHECK(row.find("0.5") != std::string::npos);
    CHECK(row.find("3.25") != std::string::npos);
}
