#pragma once

#include "artery/core.hpp"
#include "artery/tree.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace artery {

// Orthonormal moving frame at a point of the centerline.
struct Frame {
    Vec3 origin_mm = Vec3::Zero();
    Vec3 tangent = Vec3::UnitZ();
    Vec3 normal = Vec3::UnitX();
    Vec3 binormal = Vec3::UnitY();

    bool orthonormal(double tol = 1e-9) const;
};

// Planar section contour in the frame's normal-binormal plane.
struct CrossSection {
    Frame frame;
    std::vector<Vec2> contour;  // counterclockwise, simple
    double a_mm = 1.0;          // semi-axis along the normal
    double b_mm = 1.0;          // semi-axis along the binormal
    double area0_mm2 = M_PI;
    double arc_mm = 0.0;        // arc-length position along the branch
    int branch_id = -1;
    int section_index = -1;
};

struct MeshSizingParams {
    double h_min_mm = 0.2;
    double h_max_mm = 1.0;
    double alpha_sizing = 1.0;

    void validate() const {
        if (!(h_min_mm > 0) || !(h_max_mm > 0)) throw InputError("mesh sizes must be positive");
        if (h_min_mm > h_max_mm) throw InputError("h_min_mm > h_max_mm");
        if (!(alpha_sizing > 0)) throw InputError("alpha_sizing must be positive");
    }
};

// Curvature-adaptive target edge length, h_min + (h_max - h_min) * exp(-alpha*kappa).
template <typename Scalar>
Scalar local_mesh_size(Scalar kappa, const MeshSizingParams& p) {
    return Scalar(p.h_min_mm) +
           Scalar(p.h_max_mm - p.h_min_mm) * std::exp(-Scalar(p.alpha_sizing) * kappa);
}

// One lofted ring of wall vertices, recorded so downstream stages can sweep
// tetrahedra and apply per-section deformation without re-deriving topology.
struct RingInfo {
    int branch_id = -1;
    int ring_index = -1;
    int section_index = -1;  // nearest input cross-section
    double arc_mm = 0.0;     // arc position along the lofted branch
    Vec3 origin_mm = Vec3::Zero();
    Vec3 normal = Vec3::UnitX();
    Vec3 binormal = Vec3::UnitY();
    std::vector<int> vertex_ids;  // counterclockwise
};

struct SurfaceMesh {
    Points3 vertices;  // 3 x n, mm
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> vertex_ring;     // -1 for cap centers / stitch-only vertices
    std::vector<int> vertex_section;  // nearest section index, -1 if untagged
    std::vector<RingInfo> rings;

    int vertex_count() const { return int(vertices.cols()); }
    Vec3 vertex(int i) const { return vertices.col(i); }
};

// Closed-manifold test: every edge shared by exactly two consistently
// oriented triangles and no degenerate faces. boundary_edges (optional)
// receives the unmatched directed edges.
bool surface_is_closed_manifold(const SurfaceMesh& mesh,
                                std::vector<std::array<int, 2>>* boundary_edges = nullptr);

int euler_characteristic(const SurfaceMesh& mesh);

double surface_area_mm2(const SurfaceMesh& mesh);

// Rotation angle (degrees) taking frame a into frame b.
double frame_rotation_angle_deg(const Frame& a, const Frame& b);

// Cross sections along every branch at ~sections_per_mm spacing. Frames are
// Frenet-Serret where curvature is defined and rotation-minimizing across
// straight or inflection segments; contours are circles of the local radius.
std::vector<std::vector<CrossSection>> build_cross_sections(const VesselTree& tree,
                                                            double sections_per_mm);

// Single-branch loft: longitudinal cubic-spline interpolation of the section
// origins and semi-axes, ring spacing and circumferential count from
// local_mesh_size, closed capped tube.
SurfaceMesh loft_surface(const std::vector<CrossSection>& sections, const MeshSizingParams& sizing);

// Whole-tree loft: every branch lofted, child tubes stitched into a hole cut
// in the parent wall near each bifurcation; falls back to a capped separate
// component when a stitch would break manifoldness.
SurfaceMesh loft_tree_surface(const std::vector<std::vector<CrossSection>>& branch_sections,
                              const VesselTree& tree, const MeshSizingParams& sizing);

struct TetMesh {
    Points3 nodes;  // 3 x n, mm
    std::vector<std::array<int, 4>> tets;
    std::vector<int> wall_node_ids;
    std::vector<int> centerline_node_ids;

    // auxiliary tags used by the skinning and dynamics stages
    std::vector<int> node_branch;        // per node
    std::vector<double> node_arc_mm;     // arc position, centerline nodes only (else 0)
    std::vector<int> surface_to_node;    // surface vertex -> tet node

    int node_count() const { return int(nodes.cols()); }
    double tet_volume(int t) const;
    double total_volume_mm3() const;
    void validate() const;
};

// Template-sweep tetrahedralization: each ring-to-ring layer fans its wall
// triangles and its upper disk to the lower centerline node; child branches
// are rooted at their bifurcation node with a cone layer. Degenerate tets
// (|volume| <= 1e-7 mm^3) are dropped, a fully degenerate layer or an
// inverted element raises an error.
TetMesh tetrahedralize(const SurfaceMesh& surface, const VesselTree& tree);

}  // namespace artery
