// Test-only reference implementations, independent of the library paths they
// check: dense active-set QP, voxel-graph Dijkstra, all-pairs distances,
// brute-force collision and intersection scans.
#pragma once

#include "artery/geometry.hpp"
#include "artery/sim.hpp"
#include "artery/skinning.hpp"
#include "artery/volume.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <vector>

namespace oracle {

using artery::SurfaceMesh;
using artery::TetMesh;
using artery::Vec3;
using artery::VoxelVolume;

// ---------------------------------------------------------------------------
// Dense bounded-biharmonic solver: full KKT system with explicit active-set
// bookkeeping, dense LU per iteration.
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd dense_bilaplacian(const TetMesh& mesh) {
    const int n = mesh.node_count();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    for (const auto& t : mesh.tets) {
        const Vec3 x0 = mesh.nodes.col(t[0]);
        Eigen::Matrix3d d;
        d.col(0) = mesh.nodes.col(t[1]) - x0;
        d.col(1) = mesh.nodes.col(t[2]) - x0;
        d.col(2) = mesh.nodes.col(t[3]) - x0;
        const double vol = d.determinant() / 6.0;
        const Eigen::Matrix3d dinv = d.inverse();
        Eigen::Matrix<double, 4, 3> g;
        g.row(1) = dinv.row(0);
        g.row(2) = dinv.row(1);
        g.row(3) = dinv.row(2);
        g.row(0) = -(g.row(1) + g.row(2) + g.row(3));
        for (int i = 0; i < 4; ++i) {
            m[t[size_t(i)]] += vol / 4.0;
            for (int j = 0; j < 4; ++j)
                k(t[size_t(i)], t[size_t(j)]) += vol * g.row(i).dot(g.row(j));
        }
    }
    return k * m.cwiseInverse().asDiagonal() * k;
}

// One handle column: minimize w^T Q w with equality rows (Dirichlet plus the
// current active set) solved through the full KKT block matrix.
inline Eigen::VectorXd dense_bounded_solve(const Eigen::MatrixXd& q,
                                           const std::vector<int>& fixed_nodes,
                                           const std::vector<double>& fixed_values) {
    const int n = int(q.rows());
    std::vector<double> bound(size_t(n), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < fixed_nodes.size(); ++i)
        bound[size_t(fixed_nodes[i])] = fixed_values[i];
    std::vector<int> active_kind(size_t(n), 0);  // 0 free, 1 at 0, 2 at 1

    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<int> eq_nodes;
        std::vector<double> eq_vals;
        for (int i = 0; i < n; ++i) {
            if (std::isfinite(bound[size_t(i)])) {
                eq_nodes.push_back(i);
                eq_vals.push_back(bound[size_t(i)]);
            } else if (active_kind[size_t(i)] == 1) {
                eq_nodes.push_back(i);
                eq_vals.push_back(0.0);
            } else if (active_kind[size_t(i)] == 2) {
                eq_nodes.push_back(i);
                eq_vals.push_back(1.0);
            }
        }
        const int ne = int(eq_nodes.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + ne, n + ne);
        kkt.topLeftCorner(n, n) = q + q.transpose();  // gradient of w^T Q w
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + ne);
        for (int e = 0; e < ne; ++e) {
            kkt(n + e, eq_nodes[size_t(e)]) = 1.0;
            kkt(eq_nodes[size_t(e)], n + e) = 1.0;
            rhs[n + e] = eq_vals[size_t(e)];
        }
        const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
        w = sol.head(n);

        // clamp violators
        int changed = 0;
        for (int i = 0; i < n; ++i) {
            if (std::isfinite(bound[size_t(i)]) || active_kind[size_t(i)] != 0) continue;
            if (w[i] < -1e-10) {
                active_kind[size_t(i)] = 1;
                ++changed;
            } else if (w[i] > 1.0 + 1e-10) {
                active_kind[size_t(i)] = 2;
                ++changed;
            }
        }
        if (changed > 0) continue;

        // release the single worst wrong-sign multiplier
        const Eigen::VectorXd grad = (q + q.transpose()) * w;
        int release = -1;
        double worst = -1e-9 * std::max(1.0, q.diagonal().cwiseAbs().mean());
        for (int i = 0; i < n; ++i) {
            if (std::isfinite(bound[size_t(i)]) || active_kind[size_t(i)] == 0) continue;
            const double v = active_kind[size_t(i)] == 1 ? grad[i] : -grad[i];
            if (v < worst) {
                worst = v;
                release = i;
            }
        }
        if (release < 0) return w;
        active_kind[size_t(release)] = 0;
    }
    return w;
}

inline Eigen::MatrixXd dense_weights(const TetMesh& mesh, const artery::HandleSet& handles) {
    const Eigen::MatrixXd q = dense_bilaplacian(mesh);
    const int n = mesh.node_count();
    Eigen::MatrixXd w(n, handles.count());
    for (int b = 0; b < handles.count(); ++b) {
        std::vector<int> nodes;
        std::vector<double> values;
        for (int h = 0; h < handles.count(); ++h)
            for (int nd : handles.handles[size_t(h)].centerline_nodes) {
                nodes.push_back(nd);
                values.push_back(h == b ? 1.0 : 0.0);
            }
        w.col(b) = dense_bounded_solve(q, nodes, values);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Voxel-graph Dijkstra (26-neighborhood, physical edge lengths)
// ---------------------------------------------------------------------------

inline double dijkstra_geodesic_mm(const VoxelVolume& mask, std::array<int, 3> from,
                                   std::array<int, 3> to) {
    const std::int64_t n = mask.size();
    std::vector<double> dist(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    using Entry = std::pair<double, std::int64_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    const std::int64_t src = mask.index(from[0], from[1], from[2]);
    const std::int64_t dst = mask.index(to[0], to[1], to[2]);
    dist[size_t(src)] = 0.0;
    heap.emplace(0.0, src);
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[size_t(u)]) continue;
        if (u == dst) return d;
        const auto [x, y, z] = mask.coords(u);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    if (!mask.inside(x + dx, y + dy, z + dz)) continue;
                    const std::int64_t v = mask.index(x + dx, y + dy, z + dz);
                    if (mask.values[size_t(v)] == 0.0f) continue;
                    const Vec3 step(dx * mask.spacing_mm.x(), dy * mask.spacing_mm.y(),
                                    dz * mask.spacing_mm.z());
                    const double nd = d + step.norm();
                    if (nd < dist[size_t(v)]) {
                        dist[size_t(v)] = nd;
                        heap.emplace(nd, v);
                    }
                }
    }
    return dist[size_t(dst)];
}

// ---------------------------------------------------------------------------
// All-pairs distance scans
// ---------------------------------------------------------------------------

inline double brute_hausdorff(const SurfaceMesh& a, const SurfaceMesh& b) {
    const auto directed = [](const SurfaceMesh& from, const SurfaceMesh& to) {
        double worst = 0.0;
        for (int i = 0; i < from.vertex_count(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < to.vertex_count(); ++j)
                best = std::min(best, (from.vertex(i) - to.vertex(j)).squaredNorm());
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    return std::max(directed(a, b), directed(b, a));
}

inline double brute_msd(const SurfaceMesh& a, const SurfaceMesh& b) {
    double sum = 0.0;
    for (int i = 0; i < a.vertex_count(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < b.vertex_count(); ++j)
            best = std::min(best, (a.vertex(i) - b.vertex(j)).squaredNorm());
        sum += std::sqrt(best);
    }
    return sum / a.vertex_count();
}

// ---------------------------------------------------------------------------
// Brute-force wire contacts (same per-pair criterion as the library)
// ---------------------------------------------------------------------------

inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

inline std::set<std::pair<int, int>> brute_contact_set(const artery::Guidewire& wire,
                                                       const SurfaceMesh& mesh) {
    std::set<std::pair<int, int>> out;  // (node, triangle)
    for (int i = 0; i < wire.count(); ++i)
        for (int t = 0; t < int(mesh.triangles.size()); ++t) {
            const auto& tri = mesh.triangles[size_t(t)];
            const Vec3 q = closest_on_triangle(wire.nodes.col(i), mesh.vertex(tri[0]),
                                               mesh.vertex(tri[1]), mesh.vertex(tri[2]));
            if ((wire.nodes.col(i) - q).norm() <= wire.tip_radius_mm) out.insert({i, t});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Triangle-triangle intersection scan (separating-axis test on non-adjacent
// pairs) for self-intersection checks.
// ---------------------------------------------------------------------------

namespace detail {

inline bool tri_tri_overlap(const Vec3& a0, const Vec3& a1, const Vec3& a2, const Vec3& b0,
                            const Vec3& b1, const Vec3& b2) {
    const auto axis_separates = [&](const Vec3& axis) {
        if (axis.squaredNorm() < 1e-18) return false;
        double amin = std::numeric_limits<double>::infinity(), amax = -amin;
        double bmin = amin, bmax = -amin;
        for (const Vec3* p : {&a0, &a1, &a2}) {
            const double d = axis.dot(*p);
            amin = std::min(amin, d);
            amax = std::max(amax, d);
        }
        for (const Vec3* p : {&b0, &b1, &b2}) {
            const double d = axis.dot(*p);
            bmin = std::min(bmin, d);
            bmax = std::max(bmax, d);
        }
        return amax < bmin - 1e-12 || bmax < amin - 1e-12;
    };
    const std::array<Vec3, 3> ea = {a1 - a0, a2 - a1, a0 - a2};
    const std::array<Vec3, 3> eb = {b1 - b0, b2 - b1, b0 - b2};
    if (axis_separates(ea[0].cross(ea[1]))) return false;
    if (axis_separates(eb[0].cross(eb[1]))) return false;
    for (const auto& u : ea)
        for (const auto& v : eb)
            if (axis_separates(u.cross(v))) return false;
    return true;
}

}  // namespace detail

inline int count_self_intersections(const SurfaceMesh& mesh) {
    int count = 0;
    const int nt = int(mesh.triangles.size());
    for (int i = 0; i < nt; ++i)
        for (int j = i + 1; j < nt; ++j) {
            const auto& ti = mesh.triangles[size_t(i)];
            const auto& tj = mesh.triangles[size_t(j)];
            bool adjacent = false;
            for (int u = 0; u < 3 && !adjacent; ++u)
                for (int v = 0; v < 3 && !adjacent; ++v) adjacent = ti[size_t(u)] == tj[size_t(v)];
            if (adjacent) continue;
            if (detail::tri_tri_overlap(mesh.vertex(ti[0]), mesh.vertex(ti[1]), mesh.vertex(ti[2]),
                                        mesh.vertex(tj[0]), mesh.vertex(tj[1]),
                                        mesh.vertex(tj[2])))
                ++count;
        }
    return count;
}

// ---------------------------------------------------------------------------
// Shared phantom helpers for tests
// ---------------------------------------------------------------------------

// Straight tube tet mesh of controllable size built through the library's
// own loft path (tree -> sections -> loft -> sweep).
struct TubeAssets {
    artery::VesselTree tree;
    std::vector<std::vector<artery::CrossSection>> sections;
    SurfaceMesh surface;
    TetMesh mesh;
};

inline TubeAssets make_tube(double radius_mm, double length_mm, double sections_per_mm,
                            const artery::MeshSizingParams& sizing) {
    TubeAssets assets;
    artery::Branch branch;
    branch.id = 0;
    branch.parent_branch = -1;
    const int n = std::max(2, int(length_mm * 2));
    for (int i = 0; i < n; ++i) {
        artery::CenterlinePoint p;
        p.id = i;
        p.pos_mm = Vec3(0, 0, length_mm * i / (n - 1));
        p.radius_mm = radius_mm;
        p.arc_length_mm = length_mm * i / (n - 1);
        p.branch_id = 0;
        if (i > 0) p.parent_id = i - 1;
        branch.point_ids.push_back(i);
        assets.tree.points.push_back(p);
    }
    assets.tree.branches.push_back(branch);
    assets.sections = artery::build_cross_sections(assets.tree, sections_per_mm);
    assets.surface = artery::loft_surface(assets.sections[0], sizing);
    assets.mesh = artery::tetrahedralize(assets.surface, assets.tree);
    return assets;
}

}  // namespace oracle
