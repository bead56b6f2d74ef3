#pragma once

#include "artery/core.hpp"
#include "artery/volume.hpp"

#include <optional>
#include <vector>

namespace artery {

struct CenterlinePoint {
    int id = -1;
    Vec3 pos_mm = Vec3::Zero();
    double radius_mm = 0.0;
    double arc_length_mm = 0.0;  // accumulated from the branch head
    int branch_id = -1;
    std::optional<int> parent_id;  // previous point along the branch; head of a child
                                   // branch links to the bifurcation point
};

struct Branch {
    int id = -1;
    std::vector<int> point_ids;   // contiguous path, ordered head -> tail
    int parent_branch = -1;       // -1 for roots
};

struct Bifurcation {
    int point_id = -1;                  // lives on the parent branch
    std::vector<int> child_branches;    // >= 2
    std::vector<double> angles_deg;     // pairwise inter-child angles
    double murray_residual_mm3 = 0.0;   // r_p^3 - sum r_di^3
    int main_child = -1;                // child carrying the largest downstream length
};

// Centerline forest: points with radii and arc length, branch paths, and
// bifurcation annotations.
struct VesselTree {
    std::vector<CenterlinePoint> points;
    std::vector<Branch> branches;
    std::vector<Bifurcation> bifurcations;

    const CenterlinePoint& point(int id) const { return points.at(size_t(id)); }
    double branch_length_mm(int branch_id) const;
    void validate() const;  // forest structure, radii, arc-length monotonicity
};

// Fast-marching arrival times from the seed over the nonzero voxels of mask,
// with speed F = (1 + distance_to_boundary_mm)^2 pulling fronts toward the
// medial axis. Unreached voxels hold +inf.
std::vector<double> fast_marching_times(const VoxelVolume& mask, std::int64_t seed_idx);

// Centerline extraction: fast marching from seed, steepest-descent
// backtracking from each endpoint, merge of the backtracked paths into a
// forest, radii from the distance transform, per-branch arc length.
VesselTree extract_centerline(const VoxelVolume& mask, std::array<int, 3> seed,
                              const std::vector<std::array<int, 3>>& endpoints);

// Branch-tip detection for automatic extraction: arrival-time local maxima
// with non-maximum suppression so one tip survives per end disc. The
// suppression radius scales with the local tube radius.
std::vector<std::array<int, 3>> detect_endpoints(const VoxelVolume& mask,
                                                 const std::vector<double>& times,
                                                 const std::vector<float>& dist_mm,
                                                 std::int64_t seed_idx = -1);

// Convenience wrapper: thickest-point seed, farthest-point re-seed, endpoint
// detection, extraction. The rule both the mask pipeline and mesh validation
// share.
VesselTree extract_centerline_auto(const VoxelVolume& mask);

// Annotates every bifurcation with the Murray residual r_p^3 - sum r_di^3,
// the pairwise inter-child angles, and the main child by accumulated
// downstream length. Returns the annotated copy.
VesselTree analyze_topology(VesselTree tree);

}  // namespace artery
