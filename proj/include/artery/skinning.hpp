#pragma once

#include "artery/core.hpp"
#include "artery/geometry.hpp"

#include <Eigen/SparseCore>

#include <vector>

namespace artery {

struct RigidTransform {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& v) const { return rotation * v + translation; }

    static RigidTransform translate(const Vec3& d) {
        RigidTransform t;
        t.translation = d;
        return t;
    }
    static RigidTransform rotate_about(const Quat& r, const Vec3& pivot) {
        RigidTransform t;
        t.rotation = r;
        t.translation = pivot - r * pivot;
        return t;
    }
};

// A centerline segment acting as a rigid bone.
struct Handle {
    std::vector<int> centerline_nodes;  // tet-mesh node ids
    int branch_id = -1;
    double arc_begin_mm = 0.0;
    double arc_end_mm = 0.0;
    RigidTransform rest;
};

struct HandleSet {
    std::vector<Handle> handles;

    int count() const { return int(handles.size()); }
    // disjoint, nonempty, and covering every centerline node of the mesh
    void validate(const TetMesh& mesh) const;
};

// Inter-bifurcation centerline segments subdivided at subdivision_mm.
HandleSet build_handles(const TetMesh& mesh, double subdivision_mm = 5.0);

// Dirichlet rows: each constrained node carries 1 for exactly one handle.
struct ConstraintSet {
    std::vector<int> node_ids;
    std::vector<int> unit_handle;  // parallel to node_ids
};

ConstraintSet dirichlet_constraints(const TetMesh& mesh, const HandleSet& handles);

struct WeightMatrix {
    Eigen::MatrixXd values;          // n_nodes x n_handles
    std::vector<int> fallback_rows;  // rows rescued by the nearest-handle indicator

    int rows() const { return int(values.rows()); }
    int handles() const { return int(values.cols()); }
};

struct SolveOptions {
    double kkt_tol = 1e-8;
    int max_active_set_iters = 200;
    unsigned n_threads = 0;
};

// Linear P1 stiffness over the tets (Laplacian energy).
Eigen::SparseMatrix<double> stiffness_matrix(const TetMesh& mesh);

// Lumped (diagonal) mass, one quarter of each tet volume per corner.
Eigen::VectorXd lumped_mass(const TetMesh& mesh);

// Discrete bi-Laplacian K M^-1 K.
Eigen::SparseMatrix<double> bilaplacian(const TetMesh& mesh);

// Bounded biharmonic weights: per handle, minimize w^T (K M^-1 K) w subject
// to unit value on the handle's centerline nodes, zero on all other handles'
// nodes, and box bounds [0,1] enforced by an active-set loop.
WeightMatrix solve_weights(const TetMesh& mesh, const HandleSet& handles,
                           const SolveOptions& opts = {});

// Row-wise normalization to unit sum. Zero-sum rows fall back to the
// indicator of the geodesically nearest handle (graph distance over tet
// edges) and are reported in fallback_rows.
WeightMatrix normalize_weights(WeightMatrix w, const TetMesh* mesh = nullptr,
                               const HandleSet* handles = nullptr);

// Weight rows for the surface vertices (wall rows; cap centers take their
// centerline node's row).
Eigen::MatrixXd wall_weights(const WeightMatrix& w, const TetMesh& mesh,
                             const SurfaceMesh& surface);

// Linear-blend skinning in displacement form: v' = v + sum_b w_b (T_b(v) - v).
// vertex_weights has one row per surface vertex.
SurfaceMesh apply_skinning(const SurfaceMesh& surface, const Eigen::MatrixXd& vertex_weights,
                           const std::vector<RigidTransform>& transforms);

// In-place variant writing into `out` (3 x n), for per-frame synthesis.
void apply_skinning_positions(const Points3& rest, const Eigen::MatrixXd& vertex_weights,
                              const std::vector<RigidTransform>& transforms, Points3& out);

}  // namespace artery
