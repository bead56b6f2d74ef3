// Command-line front end for the vessel reconstruction / deformation toolkit.

#include "artery/io.hpp"
#include "artery/pipeline.hpp"
#include "artery/sim.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace artery;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool strict = false;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config JSON");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "global seed");
    cmd->add_flag("--strict", args.strict, "fail on constraint violations");
    cmd->add_option("--set", args.overrides, "config override, e.g. frangi.alpha=0.6")
        ->take_all();
}

PipelineConfig make_config(const CommonArgs& args) {
    std::string text = args.config_path.empty()
                           ? config_to_json_text(PipelineConfig{})
                           : read_text_file(args.config_path);
    for (const auto& o : args.overrides) apply_override(text, o);
    PipelineConfig config = config_from_json_text(text);
    if (args.seed != 0) config.seed = args.seed;
    if (args.strict) config.strict = true;
    return config;
}

PipelineResult run_stages(const CommonArgs& args, std::vector<std::string> stages,
                          const std::map<std::string, std::string>& inputs) {
    PipelineConfig config = make_config(args);
    config.stages = std::move(stages);
    for (const auto& [k, v] : inputs)
        if (!v.empty()) config.inputs[k] = v;
    return run_pipeline(config, args.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coronary vessel tree reconstruction, skinning and cardiac-cycle simulation"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string volume_path, vesselness_path, mask_path, tree_path, surface_path, sections_path;
    std::string tetmesh_path, weights_path, sequence_path, reference_path, scenario_path;

    auto* phantom = app.add_subcommand("phantom", "generate a synthetic phantom");
    add_common(phantom, args);

    auto* vesselness = app.add_subcommand("vesselness", "multiscale vesselness filter");
    add_common(vesselness, args);
    vesselness->add_option("--volume", volume_path, "input .vol.json")->required();

    auto* centerline = app.add_subcommand("centerline", "segment and extract the centerline tree");
    add_common(centerline, args);
    centerline->add_option("--vesselness", vesselness_path, "vesselness .vol.json")->required();

    auto* topology = app.add_subcommand("topology", "annotate bifurcations (Murray residuals, angles)");
    add_common(topology, args);
    topology->add_option("--tree", tree_path, "input .tree.json")->required();

    auto* surface = app.add_subcommand("surface", "loft the wall surface from the tree");
    add_common(surface, args);
    surface->add_option("--tree", tree_path, "input .tree.json")->required();

    auto* tetmesh = app.add_subcommand("tetmesh", "tetrahedralize the wall volume");
    add_common(tetmesh, args);
    tetmesh->add_option("--surface", surface_path, "input .obj")->required();
    tetmesh->add_option("--tree", tree_path, "input .tree.json")->required();

    auto* weights = app.add_subcommand("weights", "solve bounded biharmonic skinning weights");
    add_common(weights, args);
    weights->add_option("--tetmesh", tetmesh_path, "input .tet.json")->required();

    auto* sequence = app.add_subcommand("sequence", "synthesize a cardiac-cycle motion sequence");
    add_common(sequence, args);
    sequence->add_option("--surface", surface_path, "input .obj")->required();
    sequence->add_option("--tetmesh", tetmesh_path, "input .tet.json")->required();
    sequence->add_option("--weights", weights_path, "input .wts.json")->required();
    sequence->add_option("--sections", sections_path, "input sections.json")->required();

    auto* validate = app.add_subcommand("validate", "compare two sequences (HD/MSD/BCR/BCS)");
    add_common(validate, args);
    validate->add_option("--interp", sequence_path, "interpolated .seq.json")->required();
    validate->add_option("--ref", reference_path, "reference .seq.json");

    auto* simulate = app.add_subcommand("simulate", "replay a scripted guidewire/contrast scenario");
    add_common(simulate, args);
    simulate->add_option("--surface", surface_path, "input .obj")->required();
    simulate->add_option("--tetmesh", tetmesh_path, "input .tet.json")->required();
    simulate->add_option("--weights", weights_path, "input .wts.json")->required();
    simulate->add_option("--sections", sections_path, "input sections.json")->required();
    simulate->add_option("--tree", tree_path, "input .tree.json")->required();
    simulate->add_option("--scenario", scenario_path, "scenario .scenario.json");

    auto* pipeline = app.add_subcommand("pipeline", "run the full phantom-to-simulation chain");
    add_common(pipeline, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (phantom->parsed()) {
            run_stages(args, {"phantom"}, {});
        } else if (vesselness->parsed()) {
            run_stages(args, {"vesselness"}, {{"volume", volume_path}});
        } else if (centerline->parsed()) {
            run_stages(args, {"centerline"}, {{"vesselness", vesselness_path}});
        } else if (topology->parsed()) {
            run_stages(args, {"topology"}, {{"tree", tree_path}});
        } else if (surface->parsed()) {
            run_stages(args, {"surface"}, {{"tree", tree_path}});
        } else if (tetmesh->parsed()) {
            run_stages(args, {"tetmesh"}, {{"surface", surface_path}, {"tree", tree_path}});
        } else if (weights->parsed()) {
            run_stages(args, {"weights"}, {{"tetmesh", tetmesh_path}});
        } else if (sequence->parsed()) {
            run_stages(args, {"sequence"},
                       {{"surface", surface_path},
                        {"tetmesh", tetmesh_path},
                        {"weights", weights_path},
                        {"sections", sections_path}});
        } else if (validate->parsed()) {
            run_stages(args, {"validate"},
                       {{"sequence", sequence_path}, {"reference", reference_path}});
        } else if (simulate->parsed()) {
            run_stages(args, {"simulate"},
                       {{"surface", surface_path},
                        {"tetmesh", tetmesh_path},
                        {"weights", weights_path},
                        {"sections", sections_path},
                        {"tree", tree_path},
                        {"scenario", scenario_path}});
        } else if (pipeline->parsed()) {
            const PipelineResult result = run_stages(args, {}, {});
            std::cout << "manifest: " << result.manifest_path << "\n";
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
