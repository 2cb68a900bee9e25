#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "crossview/camera.hpp"
#include "crossview/raster.hpp"
#include "crossview/synthdata.hpp"

#include "test_util.hpp"

using namespace crossview;

TEST_CASE("make_scene difficulties and determinism") {
    const SceneSpec flat = make_scene(11, "flat");
    CHECK_FALSE(flat.has_road);
    CHECK(flat.boxes.empty());

    const SceneSpec road = make_scene(11, "road");
    CHECK(road.has_road);
    CHECK(road.boxes.empty());

    const SceneSpec boxes = make_scene(11, "boxes");
    CHECK(boxes.has_road);
    CHECK(boxes.boxes.size() >= 3);
    CHECK(boxes.boxes.size() <= 8);

    const SceneSpec again = make_scene(11, "boxes");
    REQUIRE(again.boxes.size() == boxes.boxes.size());
    for (std::size_t i = 0; i < boxes.boxes.size(); ++i) {
        CHECK(again.boxes[i].center_east == boxes.boxes[i].center_east);
        CHECK(again.boxes[i].center_north == boxes.boxes[i].center_north);
        CHECK(again.boxes[i].size == boxes.boxes[i].size);
        CHECK(again.boxes[i].height == boxes.boxes[i].height);
    }
    CHECK(again.checker_period == boxes.checker_period);
    CHECK(again.noise_amp == boxes.noise_amp);

    const SceneSpec other = make_scene(12, "boxes");
    const bool differs = other.boxes.size() != boxes.boxes.size() ||
                         other.boxes[0].center_east != boxes.boxes[0].center_east;
    CHECK(differs);

    CHECK_THROWS_AS((void)make_scene(1, "mountain"), std::invalid_argument);
}

TEST_CASE("ground color is deterministic and piecewise constant per checker cell") {
    const SceneSpec s = make_scene(3, "flat");
    float a[3], b[3];
    scene_ground_color(s, 1.25, -4.5, a);
    scene_ground_color(s, 1.25, -4.5, b);
    for (int c = 0; c < 3; ++c) CHECK(a[c] == b[c]);
    for (int c = 0; c < 3; ++c) {
        CHECK(a[c] >= 0.0f);
        CHECK(a[c] <= 1.0f);
    }
}

TEST_CASE("satellite render shape, determinism, and serial agreement") {
    const SceneSpec s = make_scene(21, "boxes");
    SatMeta meta;
    meta.width = 96;
    meta.height = 80;

    const Raster sat = render_satellite(s, meta);
    REQUIRE(sat.channels == 3);
    REQUIRE(sat.height == 80);
    REQUIRE(sat.width == 96);
    CHECK(sat.all_finite());

    const Raster sat2 = render_satellite(s, meta);
    CHECK(max_abs_diff(sat, sat2) == 0.0);

    const Raster ser = render_satellite_serial(s, meta);
    CHECK(max_abs_diff(sat, ser) == 0.0);
}

TEST_CASE("ground render shows sky above the horizon and matches serial") {
    const SceneSpec s = make_scene(31, "flat");
    const CameraModel cam = PanoramaCamera{64, 16};
    RelativePose pose;
    pose.sat_u = 128.0;
    pose.sat_v = 128.0;
    pose.yaw = 0.4;
    pose.cam_height = 2.0;

    const Raster g = render_ground(s, pose, cam);
    REQUIRE(g.channels == 3);
    REQUIRE(g.height == 16);
    REQUIRE(g.width == 64);

    // the top row looks up at +45 degrees; a flat scene has nothing there
    for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) CHECK(g.at(c, 0, x) == s.sky_color[c]);

    // the bottom row looks down and must hit the ground plane
    for (int x = 0; x < 64; ++x) {
        bool is_sky = true;
        for (int c = 0; c < 3; ++c)
            if (g.at(c, 15, x) != s.sky_color[c]) is_sky = false;
        CHECK_FALSE(is_sky);
    }

    const Raster ser = render_ground_serial(s, pose, cam);
    CHECK(max_abs_diff(g, ser) == 0.0);

    const Raster again = render_ground(s, pose, cam);
    CHECK(max_abs_diff(g, again) == 0.0);
}

TEST_CASE("boxes rise above the ground plane in the ground view") {
    // a scene with boxes must differ from its flattened twin somewhere above
    // the horizon row (boxes are the only geometry with positive height)
    SceneSpec s = make_scene(41, "flat");
    SceneSpec with_box = s;
    SceneBox box;
    box.center_east = 0.0;
    box.center_north = 6.0;  // straight ahead of a north-facing camera
    box.size = 6.0;
    box.height = 8.0;
    box.color[0] = 0.9f;
    box.color[1] = 0.1f;
    box.color[2] = 0.1f;
    with_box.boxes.push_back(box);

    const CameraModel cam = PanoramaCamera{64, 32};
    RelativePose pose;
    pose.sat_u = 128.0;
    pose.sat_v = 128.0;
    pose.yaw = 0.0;  // facing north
    pose.cam_height = 2.0;

    const Raster plain = render_ground(s, pose, cam);
    const Raster boxed = render_ground(with_box, pose, cam);
    double above_horizon_diff = 0.0;
    for (int y = 0; y < 16; ++y)  // strictly above the horizon (elevation > 0)
        for (int x = 0; x < 64; ++x)
            for (int c = 0; c < 3; ++c)
                above_horizon_diff +=
                    std::abs(boxed.at(c, y, x) - plain.at(c, y, x));
    CHECK(above_horizon_diff > 0.0);
}
