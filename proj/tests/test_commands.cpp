#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "crossview/camera.hpp"
#include "crossview/commands.hpp"
#include "crossview/config.hpp"
#include "crossview/io.hpp"
#include "crossview/raster.hpp"

#include "test_util.hpp"

using namespace crossview;

namespace {
constexpr double kPi = 3.14159265358979323846;

// Small camera and schedule so command-level tests stay fast.
Config fast_config() {
    Config cfg = config_with(Config(), "camera.width", 64);
    cfg = config_with(cfg, "camera.height", 16);
    cfg = config_with(cfg, "diffusion.steps", 10);
    cfg = config_with(cfg, "diffusion.eta", 0.0);
    cfg = config_with(cfg, "iha.steps", 8);
    return cfg;
}
}  // namespace

TEST_CASE("parse_pose accepts three or four fields and rejects junk") {
    const RelativePose p3 = parse_pose("10,20,90");
    CHECK(p3.sat_u == doctest::Approx(10.0));
    CHECK(p3.sat_v == doctest::Approx(20.0));
    CHECK(p3.yaw == doctest::Approx(kPi / 2.0));
    CHECK(p3.cam_height == doctest::Approx(2.0));

    const RelativePose p4 = parse_pose("128.5,64,-45,1.6");
    CHECK(p4.sat_u == doctest::Approx(128.5));
    CHECK(p4.yaw == doctest::Approx(-kPi / 4.0));
    CHECK(p4.cam_height == doctest::Approx(1.6));

    CHECK_THROWS_AS((void)parse_pose(""), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_pose("1,2"), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_pose("1,2,3,4,5"), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_pose("a,b,c"), std::invalid_argument);
}

TEST_CASE("config sections map to domain objects") {
    const Config cfg;
    const CameraModel cam = camera_from_config(cfg);
    CHECK(std::holds_alternative<PanoramaCamera>(cam));
    CHECK(camera_width(cam) == 512);
    CHECK(camera_height(cam) == 128);

    const CameraModel pin = camera_from_config(config_with(cfg, "camera.type", "pinhole"));
    CHECK(std::holds_alternative<PinholeCamera>(pin));

    const SatMeta meta = sat_meta_from_config(cfg);
    CHECK(meta.width == 256);
    CHECK(meta.meters_per_pixel == doctest::Approx(0.5));

    const NoiseSchedule sched = schedule_from_config(cfg);
    CHECK(sched.steps == 50);
    CHECK(sched.eta == doctest::Approx(1.0));

    const IhaConfig iha = iha_from_config(cfg);
    CHECK(iha.iha_steps == 40);
    CHECK(iha.candidates == 9);
    CHECK(iha.perturb_yaw == doctest::Approx(10.0 * kPi / 180.0));

    CHECK_THROWS_AS((void)config_with(cfg, "camera.lens", 3), std::invalid_argument);
    CHECK_THROWS_AS((void)camera_from_config(config_with(cfg, "camera.type", "fisheye")),
                    std::invalid_argument);
}

TEST_CASE("cmd_synth writes paired renders and a manifest, deterministically") {
    const Config cfg = fast_config();
    testutil::TempDir dir_a("crossview_synth_a");
    testutil::TempDir dir_b("crossview_synth_b");
    std::ostringstream log;

    SynthOptions opt;
    opt.out_dir = dir_a.path.string();
    opt.count = 2;
    opt.seed = 77;
    REQUIRE(cmd_synth(cfg, opt, log) == exit_ok);

    for (const char* name : {"sat_000.png", "ground_000.png", "sat_001.png", "ground_001.png",
                             "pairs.json"})
        CHECK(std::filesystem::exists(dir_a.path / name));

    const RunManifest manifest = RunManifest::load(dir_a.file("pairs.json"));
    CHECK(manifest.data["command"] == "synth");
    CHECK(manifest.data["seed"] == 77);
    REQUIRE(manifest.data["pairs"].is_array());
    REQUIRE(manifest.data["pairs"].size() == 2);
    CHECK(manifest.data["pairs"][0]["sat"] == "sat_000.png");
    CHECK(manifest.data["pairs"][0].contains("pose"));

    SynthOptions opt_b = opt;
    opt_b.out_dir = dir_b.path.string();
    REQUIRE(cmd_synth(cfg, opt_b, log) == exit_ok);
    CHECK(testutil::read_bytes(dir_a.file("sat_000.png")) ==
          testutil::read_bytes(dir_b.file("sat_000.png")));
    CHECK(testutil::read_bytes(dir_a.file("ground_001.png")) ==
          testutil::read_bytes(dir_b.file("ground_001.png")));

    // an empty run still writes a well-formed manifest
    testutil::TempDir dir_c("crossview_synth_c");
    SynthOptions none;
    none.out_dir = dir_c.path.string();
    none.count = 0;
    none.seed = 1;
    REQUIRE(cmd_synth(cfg, none, log) == exit_ok);
    const RunManifest empty = RunManifest::load(dir_c.file("pairs.json"));
    CHECK(empty.data["pairs"].empty());
}

TEST_CASE("cmd_project writes one warp per height hypothesis") {
    const Config cfg = fast_config();
    testutil::TempDir synth_dir("crossview_proj_in");
    testutil::TempDir out_dir("crossview_proj_out");
    std::ostringstream log;

    SynthOptions sopt;
    sopt.out_dir = synth_dir.path.string();
    sopt.count = 1;
    sopt.seed = 5;
    REQUIRE(cmd_synth(cfg, sopt, log) == exit_ok);

    ProjectOptions popt;
    popt.sat_path = synth_dir.file("sat_000.png");
    popt.out_dir = out_dir.path.string();
    popt.pose = parse_pose("128,128,30");
    REQUIRE(cmd_project(cfg, popt, log) == exit_ok);

    REQUIRE(std::filesystem::exists(out_dir.path / "projections.json"));
    const RunManifest manifest = RunManifest::load(out_dir.file("projections.json"));
    REQUIRE(manifest.data["outputs"].is_array());
    CHECK(manifest.data["outputs"].size() == 8);  // the eight default heights
    for (const auto& entry : manifest.data["outputs"]) {
        CHECK(std::filesystem::exists(out_dir.path / entry["file"].get<std::string>()));
        const Raster img = raster_read((out_dir.path / entry["file"].get<std::string>()).string());
        CHECK(img.height == 16);
        CHECK(img.width == 64);
    }

    // a pose off the raster is a usage error, not a crash
    ProjectOptions bad = popt;
    bad.pose = parse_pose("-5,10,0");
    CHECK(cmd_project(cfg, bad, log) == exit_usage);

    // a missing input image maps to the missing-input exit code
    ProjectOptions missing = popt;
    missing.sat_path = synth_dir.file("nope.png");
    CHECK(cmd_project(cfg, missing, log) == exit_missing);

    // explicit height list overrides the config
    ProjectOptions two = popt;
    two.out_dir = (out_dir.path / "two").string();
    two.heights = {-2.0, 3.0};
    REQUIRE(cmd_project(cfg, two, log) == exit_ok);
    const RunManifest m2 = RunManifest::load((out_dir.path / "two" / "projections.json").string());
    CHECK(m2.data["outputs"].size() == 2);
}

TEST_CASE("cmd_sample generates an image, a latent, and an honest manifest") {
    const Config cfg = fast_config();
    testutil::TempDir synth_dir("crossview_sample_in");
    testutil::TempDir out_a("crossview_sample_a");
    testutil::TempDir out_b("crossview_sample_b");
    std::ostringstream log;

    SynthOptions sopt;
    sopt.out_dir = synth_dir.path.string();
    sopt.count = 1;
    sopt.seed = 6;
    REQUIRE(cmd_synth(cfg, sopt, log) == exit_ok);

    SampleOptions opt;
    opt.sat_path = synth_dir.file("sat_000.png");
    opt.out_dir = out_a.path.string();
    opt.pose = parse_pose("128,128,0");
    opt.seed = 99;
    opt.iha = true;
    opt.trace = true;
    REQUIRE(cmd_sample(cfg, opt, log) == exit_ok);

    for (const char* name : {"generated.png", "z0.cvt", "manifest.json", "trace.jsonl"})
        CHECK(std::filesystem::exists(out_a.path / name));

    const Raster z0 = cvt_read(out_a.file("z0.cvt"));
    CHECK(z0.channels == 3);
    CHECK(z0.height == 16);
    CHECK(z0.width == 64);

    // one trace line per schedule step, each a valid JSON record
    std::ifstream trace(out_a.file("trace.jsonl"));
    int lines = 0;
    std::string line;
    while (std::getline(trace, line)) {
        if (line.empty()) continue;
        const nlohmann::json rec = nlohmann::json::parse(line);
        CHECK(rec.contains("t"));
        CHECK(rec.contains("l_pose"));
        CHECK(rec["h"].size() == 9);
        ++lines;
    }
    CHECK(lines == 10);

    const RunManifest manifest = RunManifest::load(out_a.file("manifest.json"));
    CHECK(manifest.data["command"] == "sample");
    CHECK(manifest.data["seed"] == 99);
    CHECK(manifest.data["outputs"]["image"] == "generated.png");

    // repeat run is byte identical
    SampleOptions opt_b = opt;
    opt_b.out_dir = out_b.path.string();
    REQUIRE(cmd_sample(cfg, opt_b, log) == exit_ok);
    CHECK(testutil::read_bytes(out_a.file("z0.cvt")) == testutil::read_bytes(out_b.file("z0.cvt")));
    CHECK(testutil::read_bytes(out_a.file("generated.png")) ==
          testutil::read_bytes(out_b.file("generated.png")));

    // unknown prompt keyword is a usage error
    SampleOptions bad = opt;
    bad.out_dir = (out_a.path / "bad").string();
    bad.prompt = "plaid";
    CHECK(cmd_sample(cfg, bad, log) == exit_usage);

    // a recognized prompt runs end to end
    SampleOptions red = opt;
    red.out_dir = (out_a.path / "red").string();
    red.prompt = "red";
    red.trace = false;
    CHECK(cmd_sample(cfg, red, log) == exit_ok);

    // missing satellite image
    SampleOptions missing = opt;
    missing.out_dir = (out_a.path / "missing").string();
    missing.sat_path = synth_dir.file("nope.png");
    CHECK(cmd_sample(cfg, missing, log) == exit_missing);

    // pose outside the raster
    SampleOptions oob = opt;
    oob.out_dir = (out_a.path / "oob").string();
    oob.pose = parse_pose("999,10,0");
    CHECK(cmd_sample(cfg, oob, log) == exit_usage);
}

TEST_CASE("cmd_eval scores pairs and accounts for missing generations") {
    const Config cfg = fast_config();
    testutil::TempDir synth_dir("crossview_eval_in");
    testutil::TempDir gen_dir("crossview_eval_gen");
    testutil::TempDir out_dir("crossview_eval_out");
    std::ostringstream log;

    SynthOptions sopt;
    sopt.out_dir = synth_dir.path.string();
    sopt.count = 2;
    sopt.seed = 8;
    REQUIRE(cmd_synth(cfg, sopt, log) == exit_ok);

    // generated = ground truth: every finite metric sits at its fixed point
    for (const char* name : {"ground_000.png", "ground_001.png"})
        std::filesystem::copy_file(synth_dir.path / name, gen_dir.path / name);

    EvalOptions eopt;
    eopt.pairs_path = synth_dir.file("pairs.json");
    eopt.generated_dir = gen_dir.path.string();
    eopt.out_dir = out_dir.path.string();
    REQUIRE(cmd_eval(cfg, eopt, log) == exit_ok);

    REQUIRE(std::filesystem::exists(out_dir.path / "report.json"));
    REQUIRE(std::filesystem::exists(out_dir.path / "report.csv"));
    const RunManifest report = RunManifest::load(out_dir.file("report.json"));
    CHECK(report.data["sky_crop"] == doctest::Approx(0.5));
    REQUIRE(report.data["reports"].size() == 2);
    CHECK(report.data["aggregate"]["ssim"].get<double>() == doctest::Approx(1.0));
    CHECK(report.data["aggregate"]["rmse"].get<double>() == doctest::Approx(0.0));
    CHECK(report.data["aggregate"]["psnr"].is_null());  // infinite on identical pairs
    CHECK(report.data["missing"].empty());

    // drop one generation: the run reports it and exits with the missing code
    std::filesystem::remove(gen_dir.path / "ground_001.png");
    testutil::TempDir out2("crossview_eval_out2");
    EvalOptions eopt2 = eopt;
    eopt2.out_dir = out2.path.string();
    CHECK(cmd_eval(cfg, eopt2, log) == exit_missing);
    const RunManifest partial = RunManifest::load(out2.file("report.json"));
    CHECK(partial.data["reports"].size() == 1);
    REQUIRE(partial.data["missing"].size() == 1);
    CHECK(partial.data["missing"][0]["pair"] == "ground_001.png");

    // absent pairs manifest
    EvalOptions nopairs = eopt;
    nopairs.pairs_path = synth_dir.file("absent.json");
    CHECK(cmd_eval(cfg, nopairs, log) == exit_missing);

    // unknown metric is a usage error
    CHECK(cmd_eval(config_with(cfg, "eval.metrics", nlohmann::json::array({"vibes"})), eopt,
                   log) == exit_usage);
}
