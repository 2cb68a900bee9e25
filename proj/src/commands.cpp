#include "crossview/commands.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "crossview/embedder.hpp"
#include "crossview/gca.hpp"
#include "crossview/geometry.hpp"
#include "crossview/io.hpp"
#include "crossview/metrics.hpp"
#include "crossview/models.hpp"
#include "crossview/rng.hpp"
#include "crossview/synthdata.hpp"
#include "crossview/text_guidance.hpp"

namespace fs = std::filesystem;

namespace crossview {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void ensure_dir(const std::string& dir) {
    if (dir.empty()) throw std::invalid_argument("output directory not set");
    fs::create_directories(dir);
}

nlohmann::json pose_json(const RelativePose& p) {
    return {{"u", p.sat_u}, {"v", p.sat_v}, {"yaw", p.yaw}, {"height", p.cam_height}};
}

RelativePose pose_from_json(const nlohmann::json& j) {
    RelativePose p;
    p.sat_u = j.at("u").get<double>();
    p.sat_v = j.at("v").get<double>();
    p.yaw = j.at("yaw").get<double>();
    p.cam_height = j.at("height").get<double>();
    return p;
}

nlohmann::json homography_json(const Homography& h) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 3; ++c) row.push_back(h.m[r][c]);
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

bool pose_in_sat(const RelativePose& p, const SatMeta& meta) {
    return p.sat_u >= 0.0 && p.sat_u < meta.width && p.sat_v >= 0.0 && p.sat_v < meta.height &&
           p.cam_height > 0.0;
}

std::vector<double> heights_from_config(const Config& cfg) {
    std::vector<double> hs = cfg.get_double_list("gca.heights");
    if (hs.empty()) hs = default_heights();
    return hs;
}

GcaParams gca_params_from_config(const Config& cfg) {
    GcaParams p;
    p.offset_clamp = cfg.get_double("gca.offset_clamp");
    p.stride = cfg.get_int("gca.stride");
    p.height_reference = cfg.get_string("geometry.height_reference");
    return p;
}

}  // namespace

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << data.dump(2) << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read manifest: " + path);
    RunManifest m;
    in >> m.data;
    return m;
}

RelativePose parse_pose(const std::string& text) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("pose: cannot parse '" + item + "'");
        }
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
        if (used != item.size())
            throw std::invalid_argument("pose: trailing characters in '" + item + "'");
        parts.push_back(v);
    }
    if (parts.size() != 3 && parts.size() != 4)
        throw std::invalid_argument("pose: expected u,v,yaw_deg[,height_m], got '" + text + "'");
    RelativePose p;
    p.sat_u = parts[0];
    p.sat_v = parts[1];
    p.yaw = wrap_angle(deg2rad(parts[2]));
    p.cam_height = parts.size() == 4 ? parts[3] : 2.0;
    return p;
}

CameraModel camera_from_config(const Config& cfg) {
    const std::string type = cfg.get_string("camera.type");
    const int w = cfg.get_int("camera.width");
    const int h = cfg.get_int("camera.height");
    if (type == "panorama") {
        PanoramaCamera cam;
        cam.width = w;
        cam.height = h;
        cam.elev_top = deg2rad(cfg.get_double("camera.elev_top_deg"));
        cam.elev_bottom = deg2rad(cfg.get_double("camera.elev_bottom_deg"));
        return cam;
    }
    if (type == "pinhole") {
        PinholeCamera cam;
        cam.width = w;
        cam.height = h;
        cam.hfov = deg2rad(cfg.get_double("camera.hfov_deg"));
        cam.vfov = deg2rad(cfg.get_double("camera.vfov_deg"));
        return cam;
    }
    throw std::invalid_argument("camera.type must be 'panorama' or 'pinhole', got '" + type + "'");
}

SatMeta sat_meta_from_config(const Config& cfg) {
    SatMeta meta;
    meta.meters_per_pixel = cfg.get_double("sat.meters_per_pixel");
    meta.width = cfg.get_int("sat.width");
    meta.height = cfg.get_int("sat.height");
    return meta;
}

NoiseSchedule schedule_from_config(const Config& cfg) {
    return make_schedule(cfg.get_int("diffusion.steps"), cfg.get_double("diffusion.beta_start"),
                         cfg.get_double("diffusion.beta_end"), cfg.get_string("diffusion.kind"),
                         cfg.get_double("diffusion.eta"));
}

IhaConfig iha_from_config(const Config& cfg) {
    IhaConfig c;
    c.lr = cfg.get_double("iha.lr");
    c.iha_steps = cfg.get_int("iha.steps");
    c.candidates = cfg.get_int("iha.candidates");
    c.tau = cfg.get_double("iha.tau");
    c.perturb_trans = cfg.get_double("iha.perturb_trans");
    c.perturb_yaw = deg2rad(cfg.get_double("iha.perturb_yaw_deg"));
    c.fd_step = cfg.get_double("iha.fd_step");
    c.crop = cfg.get_int("iha.crop");
    c.z_grad = cfg.get_string("iha.z_grad");
    return c;
}

Config config_with(const Config& cfg, const std::string& dotted_key,
                   const nlohmann::json& value) {
    nlohmann::json j = cfg.overrides();
    nlohmann::json* node = &j;
    std::string rest = dotted_key;
    for (std::size_t dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
        const std::string head = rest.substr(0, dot);
        rest = rest.substr(dot + 1);
        if (!node->contains(head) || !(*node)[head].is_object()) (*node)[head] = nlohmann::json::object();
        node = &(*node)[head];
    }
    (*node)[rest] = value;
    return Config::from_json(j);
}

int cmd_synth(const Config& cfg, const SynthOptions& opt, std::ostream& log) {
    CameraModel cam;
    SatMeta meta;
    std::string difficulty;
    try {
        if (opt.count < 0) throw std::invalid_argument("count must be >= 0");
        cam = camera_from_config(cfg);
        meta = sat_meta_from_config(cfg);
        difficulty = cfg.get_string("synth.difficulty");
        ensure_dir(opt.out_dir);
    } catch (const std::exception& e) {
        log << "synth: " << e.what() << "\n";
        return exit_usage;
    }

    nlohmann::json pairs = nlohmann::json::array();
    try {
        for (int i = 0; i < opt.count; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::uint64_t scene_seed =
                opt.seed ^ (static_cast<std::uint64_t>(i + 1) * 0x9e3779b97f4a7c15ull);
            const SceneSpec scene = make_scene(scene_seed, difficulty);

            Rng pr = Rng::child(opt.seed, 0x705e0000ull + static_cast<std::uint64_t>(i));
            RelativePose pose;
            pose.sat_u = meta.width / 2.0 + pr.uniform_range(-16.0, 16.0);
            pose.sat_v = meta.height / 2.0 + pr.uniform_range(-16.0, 16.0);
            pose.yaw = wrap_angle(pr.uniform_range(-kPi, kPi));
            pose.cam_height = 2.0;

            const Raster sat = render_satellite(scene, meta);
            const Raster ground = render_ground(scene, pose, cam);

            char sat_name[32], ground_name[32];
            std::snprintf(sat_name, sizeof sat_name, "sat_%03d.png", i);
            std::snprintf(ground_name, sizeof ground_name, "ground_%03d.png", i);
            raster_write(clamp_raster(sat, 0.0f, 1.0f), (fs::path(opt.out_dir) / sat_name).string());
            raster_write(clamp_raster(ground, 0.0f, 1.0f),
                         (fs::path(opt.out_dir) / ground_name).string());

            pairs.push_back({{"index", i},
                             {"sat", sat_name},
                             {"ground", ground_name},
                             {"pose", pose_json(pose)},
                             {"scene_seed", scene_seed},
                             {"seconds", elapsed_seconds(t0)}});
        }
    } catch (const std::exception& e) {
        log << "synth: " << e.what() << "\n";
        return exit_missing;
    }

    RunManifest manifest;
    manifest.data = {{"command", "synth"},
                     {"seed", opt.seed},
                     {"count", opt.count},
                     {"config", cfg.effective()},
                     {"camera", cfg.effective()["camera"]},
                     {"meta",
                      {{"meters_per_pixel", meta.meters_per_pixel},
                       {"width", meta.width},
                       {"height", meta.height}}},
                     {"pairs", pairs}};
    try {
        manifest.write((fs::path(opt.out_dir) / "pairs.json").string());
    } catch (const std::exception& e) {
        log << "synth: " << e.what() << "\n";
        return exit_missing;
    }
    log << "synth: wrote " << opt.count << " pair(s) to " << opt.out_dir << "\n";
    return exit_ok;
}

int cmd_project(const Config& cfg, const ProjectOptions& opt, std::ostream& log) {
    CameraModel cam;
    SatMeta meta;
    std::vector<double> heights = opt.heights;
    std::string height_ref;
    try {
        cam = camera_from_config(cfg);
        meta = sat_meta_from_config(cfg);
        if (heights.empty()) heights = heights_from_config(cfg);
        height_ref = cfg.get_string("geometry.height_reference");
        if (height_ref != "camera" && height_ref != "ground")
            throw std::invalid_argument("geometry.height_reference must be 'camera' or 'ground'");
        if (!pose_in_sat(opt.pose, meta))
            throw std::invalid_argument("pose outside the satellite raster");
        ensure_dir(opt.out_dir);
    } catch (const std::exception& e) {
        log << "project: " << e.what() << "\n";
        return exit_usage;
    }

    Raster sat;
    try {
        sat = raster_read(opt.sat_path);
    } catch (const std::exception& e) {
        log << "project: " << e.what() << "\n";
        return exit_missing;
    }

    nlohmann::json outputs = nlohmann::json::array();
    for (std::size_t i = 0; i < heights.size(); ++i) {
        const double h_cam =
            height_ref == "ground" ? heights[i] - opt.pose.cam_height : heights[i];
        const SampleGrid grid = ground_view_grid(cam, opt.pose, meta, h_cam);
        const Raster img = warp(sat, grid);
        char name[48];
        std::snprintf(name, sizeof name, "warp_%02zu_h%+.2f.png", i, heights[i]);
        raster_write(clamp_raster(img, 0.0f, 1.0f), (fs::path(opt.out_dir) / name).string());
        outputs.push_back({{"height", heights[i]},
                           {"camera_relative_height", h_cam},
                           {"file", name},
                           {"valid_fraction", grid.valid_fraction()}});
    }

    RunManifest manifest;
    manifest.data = {{"command", "project"},
                     {"sat", opt.sat_path},
                     {"pose", pose_json(opt.pose)},
                     {"height_reference", height_ref},
                     {"config", cfg.effective()},
                     {"outputs", outputs}};
    manifest.write((fs::path(opt.out_dir) / "projections.json").string());
    log << "project: wrote " << heights.size() << " height warp(s) to " << opt.out_dir << "\n";
    return exit_ok;
}

int cmd_sample(const Config& cfg, const SampleOptions& opt, std::ostream& log) {
    const auto t_start = std::chrono::steady_clock::now();

    CameraModel cam;
    SatMeta meta;
    NoiseSchedule sched;
    IhaConfig iha;
    GuidanceWeights weights;
    std::string model_kind;
    TextGuidanceConfig text_cfg;
    try {
        cam = camera_from_config(cfg);
        meta = sat_meta_from_config(cfg);
        sched = schedule_from_config(cfg);
        iha = iha_from_config(cfg);
        weights.lambda_pose = cfg.get_double("diffusion.lambda_pose");
        weights.gamma_text = cfg.get_double("diffusion.gamma_text");
        model_kind = cfg.get_string("model.kind");
        text_cfg.n_patches = cfg.get_int("text.patches");
        text_cfg.patch_size = cfg.get_int("text.patch_size");
        if (opt.iha && iha.iha_steps > sched.steps)
            throw std::invalid_argument("iha.steps exceeds diffusion.steps (" +
                                        std::to_string(iha.iha_steps) + " > " +
                                        std::to_string(sched.steps) + ")");
        if (!pose_in_sat(opt.pose, meta))
            throw std::invalid_argument("pose outside the satellite raster");
        ensure_dir(opt.out_dir);
    } catch (const std::exception& e) {
        log << "sample: " << e.what() << "\n";
        return exit_usage;
    }

    Raster sat;
    try {
        sat = raster_read(opt.sat_path);
    } catch (const std::exception& e) {
        log << "sample: " << e.what() << "\n";
        return exit_missing;
    }

    const int lat_h = camera_height(cam);
    const int lat_w = camera_width(cam);

    std::unique_ptr<NoisePredictor> predictor;
    try {
        if (model_kind == "gaussian") {
            // Scene prior: uniform height-hypothesis aggregation of the
            // satellite colors into the ground view.
            Raster query(sat.channels, lat_h, lat_w);
            const ZeroOffsetUniformPredictor hyp_pred;
            const HeightHypothesisSet hyp = hyp_pred.predict(query, heights_from_config(cfg));
            const GcaResult agg =
                gca_aggregate(query, sat, cam, opt.pose, meta, hyp, gca_params_from_config(cfg));
            if (agg.low_coverage_warning)
                log << "sample: warning: " << agg.invalid_fraction * 100.0
                    << "% of ground pixels see no height plane\n";
            predictor = std::make_unique<GaussianScoreDenoiser>(
                agg.features, cfg.get_double("model.var"), sched);
        } else if (model_kind == "warp_oracle") {
            const std::string target_path = cfg.get_string("model.target");
            Raster target;
            if (!target_path.empty()) {
                target = raster_read(target_path);
            } else {
                target = warp(sat, ground_view_grid(cam, opt.pose, meta, -opt.pose.cam_height));
            }
            if (target.channels != sat.channels || target.height != lat_h ||
                target.width != lat_w)
                throw std::invalid_argument("warp_oracle target shape does not match the camera");
            predictor = std::make_unique<WarpOracleDenoiser>(target, sched);
        } else if (model_kind == "external") {
            const std::string dir = cfg.get_string("model.eps_dir");
            if (dir.empty())
                throw std::invalid_argument("model.kind 'external' requires model.eps_dir");
            if (!fs::is_directory(dir)) {
                log << "sample: missing eps directory " << dir << "\n";
                return exit_missing;
            }
            predictor = std::make_unique<ExternalPredictor>(dir);
        } else {
            throw std::invalid_argument("unknown model.kind '" + model_kind + "'");
        }
    } catch (const std::invalid_argument& e) {
        log << "sample: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        log << "sample: " << e.what() << "\n";
        return exit_missing;
    }

    std::unique_ptr<Embedder> emb;
    std::vector<double> text_target;
    if (!opt.prompt.empty()) {
        try {
            const std::string lex_path = cfg.get_string("text.lexicon");
            PromptLexicon lex =
                lex_path.empty() ? default_lexicon(sat.channels) : lexicon_from_file(lex_path);
            emb = std::make_unique<MeanColorEmbedder>(sat.channels, lex);
            text_target = emb->embed_text(opt.prompt).v;
        } catch (const std::exception& e) {
            log << "sample: " << e.what() << "\n";
            return exit_usage;
        }
    } else {
        weights.gamma_text = 0.0;
    }

    SamplerSetup setup;
    setup.predictor = predictor.get();
    setup.sched = sched;
    setup.weights = weights;
    setup.cam = cam;
    setup.meta = meta;
    setup.pose = opt.pose;
    setup.sat_feat = &sat;
    setup.iha_enabled = opt.iha;
    setup.iha = iha;
    setup.embedder = emb.get();
    setup.text_target = text_target;
    setup.text = text_cfg;

    std::ofstream trace_out;
    std::string trace_name;
    if (opt.trace) {
        trace_name = "trace.jsonl";
        trace_out.open((fs::path(opt.out_dir) / trace_name).string(), std::ios::binary);
        if (!trace_out) {
            log << "sample: cannot write trace file\n";
            return exit_missing;
        }
        setup.on_step = [&trace_out](const StepTrace& rec) {
            nlohmann::json line = {{"t", rec.t}, {"h", nlohmann::json::array()}};
            line["l_pose"] = rec.l_pose ? nlohmann::json(*rec.l_pose) : nlohmann::json(nullptr);
            line["l_text"] = rec.l_text ? nlohmann::json(*rec.l_text) : nlohmann::json(nullptr);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) line["h"].push_back(rec.h.m[r][c]);
            trace_out << line.dump() << "\n";
        };
    }

    Rng init_rng = Rng::child(opt.seed, 0x1217);
    const Raster z_start = randn_raster(sat.channels, lat_h, lat_w, init_rng);

    SampleResult res;
    try {
        res = run_sampler(z_start, setup, opt.seed);
    } catch (const NumericAbort& e) {
        log << "sample: numeric failure: " << e.what() << "\n";
        return exit_numeric;
    } catch (const std::exception& e) {
        log << "sample: " << e.what() << "\n";
        return exit_usage;
    }

    try {
        raster_write(clamp_raster(res.image, 0.0f, 1.0f),
                     (fs::path(opt.out_dir) / "generated.png").string());
        raster_write(res.z0, (fs::path(opt.out_dir) / "z0.cvt").string());
    } catch (const std::exception& e) {
        log << "sample: " << e.what() << "\n";
        return exit_missing;
    }

    nlohmann::json outputs = {{"image", "generated.png"}, {"latent", "z0.cvt"}};
    if (opt.trace) outputs["trace"] = trace_name;

    nlohmann::json l_pose = nullptr;
    nlohmann::json l_text = nullptr;
    if (!res.trace.empty()) {
        const StepTrace& last = res.trace.back();
        if (last.l_pose) l_pose = *last.l_pose;
        if (last.l_text) l_text = *last.l_text;
    }

    RunManifest manifest;
    manifest.data = {{"command", "sample"},
                     {"seed", opt.seed},
                     {"config", cfg.effective()},
                     {"inputs", {{"sat", opt.sat_path}}},
                     {"pose", pose_json(opt.pose)},
                     {"prompt", opt.prompt.empty() ? nlohmann::json(nullptr)
                                                   : nlohmann::json(opt.prompt)},
                     {"iha", opt.iha},
                     {"outputs", outputs},
                     {"h_final", homography_json(res.h_final)},
                     {"l_pose_final", l_pose},
                     {"l_text_final", l_text},
                     {"steps", sched.steps},
                     {"seconds", elapsed_seconds(t_start)}};
    manifest.write((fs::path(opt.out_dir) / "manifest.json").string());
    log << "sample: wrote " << (fs::path(opt.out_dir) / "generated.png").string() << "\n";
    return exit_ok;
}

int cmd_eval(const Config& cfg, const EvalOptions& opt, std::ostream& log) {
    std::vector<std::string> metrics;
    double sky = 0.0;
    try {
        metrics = cfg.get_string_list("eval.metrics");
        sky = cfg.get_double("eval.sky_crop");
        if (metrics.empty()) throw std::invalid_argument("eval.metrics is empty");
        if (opt.workers < 1) throw std::invalid_argument("workers must be >= 1");
        // Dry probe so an unknown metric name fails the whole run up front
        // instead of surfacing as a per-pair "missing" record.
        const MeanColorEmbedder probe_emb(3);
        (void)evaluate_pair(Raster(3, 16, 16), Raster(3, 16, 16), metrics, 0.0, &probe_emb);
        ensure_dir(opt.out_dir);
    } catch (const std::exception& e) {
        log << "eval: " << e.what() << "\n";
        return exit_usage;
    }

    RunManifest pairs_manifest;
    try {
        pairs_manifest = RunManifest::load(opt.pairs_path);
    } catch (const std::exception& e) {
        log << "eval: " << e.what() << "\n";
        return exit_missing;
    }
    if (!pairs_manifest.data.contains("pairs") || !pairs_manifest.data["pairs"].is_array()) {
        log << "eval: " << opt.pairs_path << " has no pairs array\n";
        return exit_usage;
    }
    const nlohmann::json& pairs = pairs_manifest.data["pairs"];
    const fs::path pairs_dir = fs::path(opt.pairs_path).parent_path();

    std::unique_ptr<Embedder> emb;
    if (std::find(metrics.begin(), metrics.end(), "feature_distance") != metrics.end())
        emb = std::make_unique<MeanColorEmbedder>(3);

    const int n = static_cast<int>(pairs.size());
    std::vector<MetricReport> reports(static_cast<std::size_t>(n));
    std::vector<std::string> errors(static_cast<std::size_t>(n));
    std::vector<char> ok(static_cast<std::size_t>(n), 0);
    std::vector<std::string> gt_paths(static_cast<std::size_t>(n));
    std::vector<std::string> gen_paths(static_cast<std::size_t>(n));
    std::vector<std::string> names(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::string ground = pairs[i].value("ground", std::string());
        names[i] = ground;
        gt_paths[i] = (pairs_dir / ground).string();
        gen_paths[i] = (fs::path(opt.generated_dir) / fs::path(ground).filename()).string();
    }

#pragma omp parallel for schedule(dynamic) num_threads(opt.workers) if (opt.workers > 1)
    for (int i = 0; i < n; ++i) {
        try {
            if (names[i].empty()) throw std::runtime_error("pair record has no ground image");
            if (!fs::exists(gt_paths[i]))
                throw std::runtime_error("missing reference image " + gt_paths[i]);
            if (!fs::exists(gen_paths[i]))
                throw std::runtime_error("missing generated image " + gen_paths[i]);
            const Raster ref = raster_read(gt_paths[i]);
            const Raster gen = raster_read(gen_paths[i]);
            MetricReport rep = evaluate_pair(gen, ref, metrics, sky, emb.get());
            rep.image_a = gen_paths[i];
            rep.image_b = gt_paths[i];
            reports[i] = std::move(rep);
            ok[i] = 1;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }

    nlohmann::json per_pair = nlohmann::json::array();
    nlohmann::json missing = nlohmann::json::array();
    std::map<std::string, double> sums;
    std::map<std::string, int> counts;
    for (int i = 0; i < n; ++i) {
        if (!ok[i]) {
            missing.push_back({{"pair", names[i]}, {"error", errors[i]}});
            continue;
        }
        per_pair.push_back(nlohmann::json::parse(metric_report_json(reports[i])));
        for (const auto& [name, value] : reports[i].values) {
            if (!std::isfinite(value)) continue;
            sums[name] += value;
            counts[name] += 1;
        }
    }

    nlohmann::json aggregate = nlohmann::json::object();
    MetricReport mean_row;
    mean_row.image_a = "mean";
    mean_row.image_b = "";
    for (const std::string& name : metrics) {
        if (counts.count(name) && counts[name] > 0) {
            const double mean = sums[name] / counts[name];
            aggregate[name] = mean;
            mean_row.values[name] = mean;
        } else {
            aggregate[name] = nullptr;
            mean_row.values[name] = std::numeric_limits<double>::quiet_NaN();
        }
    }

    RunManifest report;
    report.data = {{"command", "eval"},
                   {"pairs", opt.pairs_path},
                   {"generated", opt.generated_dir},
                   {"metrics", metrics},
                   {"sky_crop", sky},
                   {"config", cfg.effective()},
                   {"reports", per_pair},
                   {"aggregate", aggregate},
                   {"missing", missing}};
    try {
        report.write((fs::path(opt.out_dir) / "report.json").string());
        std::ofstream csv((fs::path(opt.out_dir) / "report.csv").string(), std::ios::binary);
        if (!csv) throw std::runtime_error("cannot write report.csv");
        csv << metric_report_csv_header(metrics) << "\n";
        for (int i = 0; i < n; ++i)
            if (ok[i]) csv << metric_report_csv_row(reports[i], metrics) << "\n";
        csv << metric_report_csv_row(mean_row, metrics) << "\n";
    } catch (const std::exception& e) {
        log << "eval: " << e.what() << "\n";
        return exit_missing;
    }

    log << "eval: scored " << per_pair.size() << "/" << n << " pair(s)";
    if (!missing.empty()) log << ", " << missing.size() << " missing";
    log << "\n";
    return missing.empty() ? exit_ok : exit_missing;
}

}  // namespace crossview
