#pragma once

#include "artery/dynamics.hpp"
#include "artery/geometry.hpp"
#include "artery/sim.hpp"
#include "artery/skinning.hpp"
#include "artery/tree.hpp"
#include "artery/volume.hpp"

#include <string>
#include <vector>

namespace artery {

// Volume: <name>.vol.json header + little-endian f32 raw, x-fastest.
void save_volume(const VoxelVolume& volume, const std::string& json_path);
VoxelVolume load_volume(const std::string& json_path);

void save_tree(const VesselTree& tree, const std::string& path);
VesselTree load_tree(const std::string& path);

// ASCII OBJ, triangles only, stable vertex order; ring/section tags travel
// in a <name>.rings.json sidecar next to the OBJ.
void save_surface(const SurfaceMesh& mesh, const std::string& obj_path);
SurfaceMesh load_surface(const std::string& obj_path);

void save_tetmesh(const TetMesh& mesh, const std::string& path);
TetMesh load_tetmesh(const std::string& path);

// Weights: <name>.wts.json header + little-endian f64 raw, row-major.
void save_weights(const WeightMatrix& weights, const std::string& json_path);
WeightMatrix load_weights(const std::string& json_path);

// Sequence: per-frame OBJs plus a <name>.seq.json manifest with entries
// {frame_index, t, rr_percent, mesh}.
void save_sequence(const MotionSequence& seq, const std::string& dir, const std::string& name);
std::vector<SurfaceMesh> load_sequence_meshes(const std::string& seq_json_path);

void save_report(const ViolationReport& report, const SequenceEnergy& energy,
                 const std::string& path);

void save_scenario(const Scenario& scenario, const std::string& path);
Scenario load_scenario(const std::string& path);

void save_simlog(const SimLog& log, const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// FNV-1a fingerprint of a file's bytes, as a fixed-width hex string.
std::string file_hash_hex(const std::string& path);

}  // namespace artery
