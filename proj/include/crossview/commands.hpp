#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "crossview/camera.hpp"
#include "crossview/config.hpp"
#include "crossview/diffusion.hpp"
#include "crossview/pose_align.hpp"

namespace crossview {

// Exit codes shared by every subcommand.
inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;    // bad flags, config conflicts, invalid pose
inline constexpr int exit_missing = 2;  // inputs absent or partially missing
inline constexpr int exit_numeric = 3;  // numeric failure (singular H, non-finite)

// Run record written next to a command's outputs. The JSON payload carries
// the command name, seed, effective config snapshot, input/output paths and
// per-image records; every file it names exists by the time it is written.
struct RunManifest {
    nlohmann::json data;
    void write(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

// "u,v,yaw_deg[,height_m]" -> pose (height defaults to 2 m). Throws
// std::invalid_argument on malformed input.
RelativePose parse_pose(const std::string& text);

// Config sections -> domain objects.
CameraModel camera_from_config(const Config& cfg);
SatMeta sat_meta_from_config(const Config& cfg);
NoiseSchedule schedule_from_config(const Config& cfg);
IhaConfig iha_from_config(const Config& cfg);

// Config with one dotted key replaced; validates like a fresh load.
Config config_with(const Config& cfg, const std::string& dotted_key, const nlohmann::json& value);

struct SynthOptions {
    std::string out_dir;
    int count = 1;
    std::uint64_t seed = 0;
};

struct ProjectOptions {
    std::string sat_path;
    std::string out_dir;
    RelativePose pose;
    std::vector<double> heights;  // empty -> config gca.heights
};

struct SampleOptions {
    std::string sat_path;
    std::string out_dir;
    RelativePose pose;
    std::string prompt;  // empty -> no text guidance
    std::uint64_t seed = 0;
    bool iha = false;
    bool trace = false;
};

struct EvalOptions {
    std::string pairs_path;      // pairs.json from cmd_synth
    std::string generated_dir;   // images named like the manifest's ground files
    std::string out_dir;
    int workers = 1;
};

// Renders `count` paired scenes into out_dir (sat_###.png / ground_###.png)
// plus pairs.json. Child seeds keep pairs independent of ordering.
int cmd_synth(const Config& cfg, const SynthOptions& opt, std::ostream& log);

// Writes one ground-view warp of the satellite image per height hypothesis,
// plus projections.json naming them.
int cmd_project(const Config& cfg, const ProjectOptions& opt, std::ostream& log);

// Runs the guided sampler against the satellite image and writes
// generated.png, z0.cvt, manifest.json and (with trace) trace.jsonl.
int cmd_sample(const Config& cfg, const SampleOptions& opt, std::ostream& log);

// Scores generated images against the manifest's ground-truth renders and
// writes report.json / report.csv with per-pair and aggregate values.
int cmd_eval(const Config& cfg, const EvalOptions& opt, std::ostream& log);

}  // namespace crossview
