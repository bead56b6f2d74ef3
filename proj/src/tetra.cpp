#include "artery/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace artery {

double TetMesh::tet_volume(int t) const {
    const auto& q = tets[size_t(t)];
    const Vec3 a = nodes.col(q[0]), b = nodes.col(q[1]), c = nodes.col(q[2]), d = nodes.col(q[3]);
    return (b - a).cross(c - a).dot(d - a) / 6.0;
}

double TetMesh::total_volume_mm3() const {
    double v = 0.0;
    for (int t = 0; t < int(tets.size()); ++t) v += tet_volume(t);
    return v;
}

void TetMesh::validate() const {
    std::vector<char> kind(size_t(node_count()), 0);
    for (int id : wall_node_ids) {
        if (id < 0 || id >= node_count() || kind[size_t(id)]) throw InputError("bad wall node set");
        kind[size_t(id)] = 1;
    }
    for (int id : centerline_node_ids) {
        if (id < 0 || id >= node_count() || kind[size_t(id)]) throw InputError("bad centerline node set");
        kind[size_t(id)] = 2;
    }
    for (char k : kind)
        if (k == 0) throw InputError("node in neither wall nor centerline set");
    for (int t = 0; t < int(tets.size()); ++t)
        if (!(tet_volume(t) > 1e-7)) throw InputError("tet volume at or below 1e-7 mm^3");
}

namespace {

struct LayerCounter {
    int kept = 0;
    int dropped = 0;
};

}  // namespace

TetMesh tetrahedralize(const SurfaceMesh& surface, const VesselTree& tree) {
    if (surface.rings.empty()) throw InputError("surface has no ring tags");

    // rings grouped per branch, ordered by within-branch index
    std::map<int, std::vector<int>> branch_rings;  // branch -> global ring ids
    for (int r = 0; r < int(surface.rings.size()); ++r)
        branch_rings[surface.rings[size_t(r)].branch_id].push_back(r);
    for (auto& [b, rs] : branch_rings)
        std::sort(rs.begin(), rs.end(), [&](int x, int y) {
            return surface.rings[size_t(x)].ring_index < surface.rings[size_t(y)].ring_index;
        });

    TetMesh mesh;
    const int nv = surface.vertex_count();
    mesh.surface_to_node.assign(size_t(nv), -1);

    // wall nodes mirror the ring vertices in surface order
    std::vector<Vec3> nodes;
    for (int v = 0; v < nv; ++v) {
        if (surface.vertex_ring[size_t(v)] < 0) continue;
        mesh.surface_to_node[size_t(v)] = int(nodes.size());
        mesh.wall_node_ids.push_back(int(nodes.size()));
        nodes.push_back(surface.vertex(v));
    }
    const int n_wall = int(nodes.size());
    mesh.node_branch.assign(size_t(n_wall), -1);
    mesh.node_arc_mm.assign(size_t(n_wall), 0.0);
    for (int v = 0; v < nv; ++v) {
        const int n = mesh.surface_to_node[size_t(v)];
        if (n >= 0)
            mesh.node_branch[size_t(n)] =
                surface.rings[size_t(surface.vertex_ring[size_t(v)])].branch_id;
    }

    // one centerline node per ring
    std::vector<int> ring_node(surface.rings.size(), -1);
    for (int r = 0; r < int(surface.rings.size()); ++r) {
        const auto& ring = surface.rings[size_t(r)];
        ring_node[size_t(r)] = int(nodes.size());
        mesh.centerline_node_ids.push_back(int(nodes.size()));
        mesh.node_branch.push_back(ring.branch_id);
        mesh.node_arc_mm.push_back(ring.arc_mm);
        nodes.push_back(ring.origin_mm);
    }
    // cap centers coincide with end-ring centerline nodes
    for (int v = 0; v < nv; ++v) {
        if (mesh.surface_to_node[size_t(v)] >= 0) continue;
        int best = -1;
        double best_d = 1e300;
        for (int r = 0; r < int(surface.rings.size()); ++r) {
            const double d = (surface.rings[size_t(r)].origin_mm - surface.vertex(v)).norm();
            if (d < best_d) {
                best_d = d;
                best = ring_node[size_t(r)];
            }
        }
        mesh.surface_to_node[size_t(v)] = best;
    }

    mesh.nodes.resize(3, int(nodes.size()));
    for (int i = 0; i < int(nodes.size()); ++i) mesh.nodes.col(i) = nodes[size_t(i)];

    // anchor node per child branch: the parent centerline node nearest the fork
    std::map<int, int> anchor_node;
    for (const auto& bif : tree.bifurcations) {
        const Vec3 pos = tree.point(bif.point_id).pos_mm;
        const int parent_branch = tree.point(bif.point_id).branch_id;
        auto it = branch_rings.find(parent_branch);
        if (it == branch_rings.end()) continue;
        int best = -1;
        double best_d = 1e300;
        for (int r : it->second) {
            const double d = (surface.rings[size_t(r)].origin_mm - pos).norm();
            if (d < best_d) {
                best_d = d;
                best = ring_node[size_t(r)];
            }
        }
        for (int cb : bif.child_branches) anchor_node[cb] = best;
    }

    std::map<std::pair<int, int>, LayerCounter> layers;  // (branch, layer) -> counts
    const auto signed_volume = [&](int a, int b, int c, int d) {
        return (mesh.nodes.col(b) - mesh.nodes.col(a))
                   .cross(mesh.nodes.col(c) - mesh.nodes.col(a))
                   .dot(mesh.nodes.col(d) - mesh.nodes.col(a)) /
               6.0;
    };
    const auto emit = [&](int a, int b, int c, int d, int branch, int layer) {
        const double v = signed_volume(a, b, c, d);
        auto& counter = layers[{branch, layer}];
        if (v < -1e-7)
            throw InputError("inverted tetrahedron in branch " + std::to_string(branch) +
                             " layer " + std::to_string(layer));
        if (v <= 1e-7) {
            ++counter.dropped;
            return;
        }
        mesh.tets.push_back({a, b, c, d});
        ++counter.kept;
    };

    // global ring id -> (branch, within-branch index)
    std::map<int, std::pair<int, int>> ring_pos;
    for (const auto& [b, rs] : branch_rings)
        for (int k = 0; k < int(rs.size()); ++k) ring_pos[rs[size_t(k)]] = {b, k};

    // wall tets: lateral triangles fanned to the lower centerline node
    for (const auto& t : surface.triangles) {
        int branch = -2, lo = 1 << 30, hi = -1;
        bool ok = true;
        for (int e = 0; e < 3 && ok; ++e) {
            const int r = surface.vertex_ring[size_t(t[size_t(e)])];
            if (r < 0) { ok = false; break; }
            const auto& [b, k] = ring_pos[r];
            if (branch == -2) branch = b;
            ok = b == branch;
            lo = std::min(lo, k);
            hi = std::max(hi, k);
        }
        if (!ok || hi != lo + 1) continue;  // caps, stitch bands, within-ring slivers
        const int apex = ring_node[size_t(branch_rings[branch][size_t(lo)])];
        emit(mesh.surface_to_node[size_t(t[1])], mesh.surface_to_node[size_t(t[0])],
             mesh.surface_to_node[size_t(t[2])], apex, branch, lo);
    }

    // interior tets: each upper disk fanned to the lower centerline node
    for (const auto& [branch, rs] : branch_rings) {
        for (int k = 0; k + 1 < int(rs.size()); ++k) {
            const int c0 = ring_node[size_t(rs[size_t(k)])];
            const int c1 = ring_node[size_t(rs[size_t(k) + 1])];
            const auto& upper = surface.rings[size_t(rs[size_t(k) + 1])].vertex_ids;
            const int m = int(upper.size());
            for (int j = 0; j < m; ++j)
                emit(c0, c1, mesh.surface_to_node[size_t(upper[size_t(j)])],
                     mesh.surface_to_node[size_t(upper[size_t((j + 1) % m)])], branch, k);
        }
        // cone to the bifurcation anchor on the parent
        auto it = anchor_node.find(branch);
        if (it != anchor_node.end() && it->second >= 0 && !rs.empty()) {
            const int c0 = ring_node[size_t(rs[0])];
            if (it->second != c0) {
                const auto& first = surface.rings[size_t(rs[0])].vertex_ids;
                const int m = int(first.size());
                for (int j = 0; j < m; ++j)
                    emit(it->second, c0, mesh.surface_to_node[size_t(first[size_t(j)])],
                         mesh.surface_to_node[size_t(first[size_t((j + 1) % m)])], branch, -1);
            }
        }
    }

    for (const auto& [key, counter] : layers) {
        if (counter.kept == 0 && counter.dropped > 0)
            throw InputError("zero-volume layer " + std::to_string(key.second) + " in branch " +
                             std::to_string(key.first));
    }
    if (mesh.tets.empty()) throw InputError("tetrahedralization produced no elements");
    return mesh;
}

}  // namespace artery
