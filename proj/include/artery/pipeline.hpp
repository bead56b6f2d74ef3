#pragma once

#include "artery/dynamics.hpp"
#include "artery/phantoms.hpp"
#include "artery/skinning.hpp"
#include "artery/validation.hpp"
#include "artery/volume.hpp"

#include <map>
#include <string>
#include <vector>

namespace artery {

// Whole-run configuration; JSON file fields override the defaults here and
// command-line flags override the file.
struct PipelineConfig {
    FrangiParams frangi;
    double segment_threshold = 0.05;
    double sections_per_mm = 2.0;
    MeshSizingParams sizing;
    double handle_subdivision_mm = 5.0;
    SolveOptions solve;
    MechanicalConstraints constraints;
    EnergyWeights energy;
    PhantomSpec phantom;
    MotionMode motion_mode = MotionMode::BendCycle;
    double motion_amplitude = 10.0;
    int n_phases = 20;
    int subdivision = 2;
    double tree_voxel_mm = 0.4;
    std::uint64_t seed = 0;
    bool strict = false;
    unsigned n_threads = 0;
    std::vector<std::string> stages;            // empty = full chain
    std::map<std::string, std::string> inputs;  // artifact name -> path

    void validate() const;  // messages name the offending field
};

PipelineConfig load_config(const std::string& path);
PipelineConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const PipelineConfig& config);

// Applies a dotted-path override such as "frangi.alpha=0.6".
void apply_override(std::string& json_text, const std::string& assignment);

struct PipelineResult {
    std::map<std::string, std::string> artifact_paths;
    std::map<std::string, std::string> artifact_hashes;
    std::string manifest_path;
};

// Runs the requested stage chain (phantom -> vesselness -> centerline ->
// topology -> surface -> tetmesh -> weights -> sequence -> validate ->
// simulate), emitting every intermediate artifact plus a manifest of
// config/artifact hashes. Missing stage inputs raise an error naming the
// stage and the artifact.
PipelineResult run_pipeline(const PipelineConfig& config, const std::string& out_dir);

// Cross-section persistence used between the surface and sequence stages.
void save_sections(const std::vector<std::vector<CrossSection>>& sections,
                   const std::string& path);
std::vector<std::vector<CrossSection>> load_sections(const std::string& path);

// Flat view ordered by global section index (for pose section arrays).
std::vector<CrossSection> flatten_sections(const std::vector<std::vector<CrossSection>>& sections);

}  // namespace artery
