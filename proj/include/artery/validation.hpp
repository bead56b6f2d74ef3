#pragma once

#include "artery/core.hpp"
#include "artery/geometry.hpp"
#include "artery/tree.hpp"

#include <string>
#include <vector>

namespace artery {

struct MetricsRow {
    int phase = 0;
    double hd_mm = 0.0;
    double msd_mm = 0.0;
    double bcr = 1.0;
    double bcs = 1.0;
};

// Symmetric vertex-sampled Hausdorff distance, kd-tree accelerated; agrees
// exactly with the all-pairs scan.
double hausdorff_distance(const SurfaceMesh& a, const SurfaceMesh& b);

// Directed mean of nearest-vertex distances from a to b.
double mean_surface_distance(const SurfaceMesh& a, const SurfaceMesh& b);

// BCR = N_I / N_R with branches matched greedily by mean curve distance
// (5 mm acceptance gate); BCS = mean over matched branches of the clamped
// length ratio min(L_i / L_R, 1).
std::pair<double, double> branch_metrics(const VesselTree& interp, const VesselTree& reference);

// Voxelizes a closed surface (per-component ray parity) and re-extracts a
// centerline tree with automatically detected seed and endpoints, so both
// sides of a comparison get identical treatment.
VesselTree extract_tree_from_mesh(const SurfaceMesh& mesh, double voxel_mm = 0.4);

struct ValidationSummary {
    std::vector<MetricsRow> rows;
    MetricsRow mean;
    MetricsRow stddev;  // population
};

// One row per phase: HD/MSD between the meshes, BCR/BCS between trees
// extracted from both by the same procedure.
ValidationSummary validate_sequence(const std::vector<SurfaceMesh>& interp,
                                    const std::vector<SurfaceMesh>& reference,
                                    const std::vector<int>& phases, double tree_voxel_mm = 0.4,
                                    unsigned n_threads = 0);

ValidationSummary summarize(std::vector<MetricsRow> rows);

// CSV with the exact header Phase,HD_mm,MSD_mm,BCR,BCS plus Mean and STD rows.
std::string metrics_csv(const ValidationSummary& summary);

}  // namespace artery
