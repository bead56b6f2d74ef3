#include "artery/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

namespace artery {

double VesselTree::branch_length_mm(int branch_id) const {
    const Branch& b = branches.at(size_t(branch_id));
    if (b.point_ids.empty()) return 0.0;
    return points.at(size_t(b.point_ids.back())).arc_length_mm;
}

void VesselTree::validate() const {
    std::vector<int> owner(points.size(), -1);
    for (const auto& b : branches) {
        for (int pid : b.point_ids) {
            if (pid < 0 || pid >= int(points.size())) throw InputError("branch references unknown point");
            if (owner[size_t(pid)] != -1) throw InputError("point belongs to more than one branch");
            owner[size_t(pid)] = b.id;
        }
        double prev = -1.0;
        for (int pid : b.point_ids) {
            const auto& p = points[size_t(pid)];
            if (!(p.radius_mm > 0.0)) throw InputError("centerline radius must be positive");
            if (p.arc_length_mm < prev - 1e-12) throw InputError("arc length not monotone along branch");
            prev = p.arc_length_mm;
        }
    }
    for (int o : owner)
        if (o == -1) throw InputError("point not referenced by any branch");

    // parent links must be acyclic (forest over branches)
    for (const auto& b : branches) {
        int cur = b.id;
        std::set<int> seen;
        while (cur != -1) {
            if (!seen.insert(cur).second) throw InputError("branch parent links contain a cycle");
            cur = branches.at(size_t(cur)).parent_branch;
        }
    }
    for (const auto& bif : bifurcations)
        if (bif.child_branches.size() < 2)
            throw InputError("bifurcation with fewer than 2 children");
}

namespace {

// Direction of a branch leaving its fork point: from the bifurcation point
// to the first branch point at least ~1 mm downstream (or the tail).
Vec3 child_direction(const VesselTree& tree, const Bifurcation& bif, const Branch& child) {
    const Vec3 base = tree.point(bif.point_id).pos_mm;
    Vec3 dir = Vec3::Zero();
    for (int pid : child.point_ids) {
        dir = tree.point(pid).pos_mm - base;
        if (dir.norm() >= 1.0) break;
    }
    const double n = dir.norm();
    if (n == 0.0) throw InputError("degenerate child branch at bifurcation");
    return dir / n;
}

double subtree_length(const VesselTree& tree, int branch_id,
                      const std::vector<std::vector<int>>& children_of) {
    double total = tree.branch_length_mm(branch_id);
    for (int c : children_of[size_t(branch_id)]) total += subtree_length(tree, c, children_of);
    return total;
}

}  // namespace

VesselTree analyze_topology(VesselTree tree) {
    tree.validate();

    std::vector<std::vector<int>> children_of(tree.branches.size());
    for (const auto& b : tree.branches)
        if (b.parent_branch >= 0) children_of[size_t(b.parent_branch)].push_back(b.id);

    for (auto& bif : tree.bifurcations) {
        if (bif.child_branches.size() < 2)
            throw InputError("bifurcation with fewer than 2 children");

        const double rp = tree.point(bif.point_id).radius_mm;
        double daughters = 0.0;
        for (int cb : bif.child_branches) {
            const Branch& child = tree.branches.at(size_t(cb));
            if (child.point_ids.empty()) throw InputError("empty child branch at bifurcation");
            const double rd = tree.point(child.point_ids.front()).radius_mm;
            daughters += rd * rd * rd;
        }
        bif.murray_residual_mm3 = rp * rp * rp - daughters;

        bif.angles_deg.clear();
        std::vector<Vec3> dirs;
        for (int cb : bif.child_branches)
            dirs.push_back(child_direction(tree, bif, tree.branches.at(size_t(cb))));
        for (std::size_t i = 0; i < dirs.size(); ++i)
            for (std::size_t j = i + 1; j < dirs.size(); ++j) {
                const double c = std::clamp(dirs[i].dot(dirs[j]), -1.0, 1.0);
                bif.angles_deg.push_back(std::acos(c) * 180.0 / M_PI);
            }

        double best = -1.0;
        for (int cb : bif.child_branches) {
            const double len = subtree_length(tree, cb, children_of);
            if (len > best) {
                best = len;
                bif.main_child = cb;
            }
        }
    }
    return tree;
}

}  // namespace artery
