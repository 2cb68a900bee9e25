#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crossview/commands.hpp"
#include "crossview/config.hpp"
#include "crossview/pose_align.hpp"
#include "crossview/selfcheck.hpp"

using namespace crossview;

int main(int argc, char** argv) {
    CLI::App app{"cross-view synthesis toolkit: satellite-conditioned street-view "
                 "generation with pose refinement"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON configuration file");

    auto* synth = app.add_subcommand("synth", "render paired synthetic satellite/ground scenes");
    synth->fallthrough();
    SynthOptions sopt;
    synth->add_option("--out", sopt.out_dir, "output directory")->required();
    synth->add_option("--count", sopt.count, "number of scene pairs");
    synth->add_option("--seed", sopt.seed, "master seed");

    auto* project =
        app.add_subcommand("project", "warp a satellite image to the ground view, one image "
                                      "per height hypothesis");
    project->fallthrough();
    ProjectOptions popt;
    std::string project_sat;
    std::string project_pose;
    project->add_option("satellite", project_sat, "satellite image (.png or .cvt)")->required();
    project->add_option("--pose", project_pose, "pose as u,v,yaw_deg[,height_m]")->required();
    project->add_option("--out", popt.out_dir, "output directory")->required();
    project->add_option("--heights", popt.heights, "hypothesis heights, meters")
        ->delimiter(',');

    auto* sample =
        app.add_subcommand("sample", "run the guided reverse-diffusion sampler against a "
                                     "satellite image");
    sample->fallthrough();
    SampleOptions samp;
    std::string sample_sat;
    std::string sample_pose;
    sample->add_option("satellite", sample_sat, "satellite image (.png or .cvt)")->required();
    sample->add_option("--pose", sample_pose, "pose as u,v,yaw_deg[,height_m]")->required();
    sample->add_option("--out", samp.out_dir, "output directory")->required();
    sample->add_option("--seed", samp.seed, "sampling seed");
    sample->add_option("--prompt", samp.prompt, "text-guidance keyword from the lexicon");
    sample->add_flag("--iha", samp.iha, "enable iterative homography adjustment");
    sample->add_flag("--trace", samp.trace, "write per-step trace.jsonl");

    auto* eval = app.add_subcommand("eval", "score generated images against a synth manifest");
    eval->fallthrough();
    EvalOptions eopt;
    eval->add_option("pairs", eopt.pairs_path, "pairs.json written by synth")->required();
    eval->add_option("--generated", eopt.generated_dir, "directory of generated images")
        ->required();
    eval->add_option("--out", eopt.out_dir, "output directory")->required();
    eval->add_option("--workers", eopt.workers, "parallel scoring workers");

    auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in verification suite");
    selfcheck->fallthrough();
    std::string fault_name = "none";
    selfcheck->add_option("--inject-fault", fault_name,
                          "deliberately break an internal constant: 'none' or 'projection'");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }

    try {
        const Config cfg = config_path.empty() ? Config{} : Config::from_file(config_path);

        if (synth->parsed()) return cmd_synth(cfg, sopt, std::cout);
        if (project->parsed()) {
            popt.sat_path = project_sat;
            popt.pose = parse_pose(project_pose);
            return cmd_project(cfg, popt, std::cout);
        }
        if (sample->parsed()) {
            samp.sat_path = sample_sat;
            samp.pose = parse_pose(sample_pose);
            return cmd_sample(cfg, samp, std::cout);
        }
        if (eval->parsed()) return cmd_eval(cfg, eopt, std::cout);
        if (selfcheck->parsed()) {
            const FaultInjection fault = fault_from_name(fault_name);
            const auto results = run_selfcheck(fault, &std::cerr);
            return selfcheck_exit(results, std::cout);
        }
    } catch (const NumericAbort& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}
