#include "artery/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

namespace artery {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Upwind quadratic update for |grad T| = 1/F on an anisotropic grid.
// Candidates are the per-axis minima of already-computed neighbor times.
double eikonal_update(const std::array<double, 3>& t_axis, const Vec3& spacing, double speed) {
    struct Cand { double t, h; };
    std::array<Cand, 3> cand;
    int m = 0;
    for (int a = 0; a < 3; ++a)
        if (std::isfinite(t_axis[size_t(a)])) cand[size_t(m++)] = {t_axis[size_t(a)], spacing[a]};
    if (m == 0) return kInf;
    std::sort(cand.begin(), cand.begin() + m, [](const Cand& a, const Cand& b) { return a.t < b.t; });

    const double rhs = 1.0 / speed;
    double best = cand[0].t + cand[0].h * rhs;
    for (int k = 2; k <= m; ++k) {
        double a = 0, b = 0, c = -rhs * rhs;
        for (int i = 0; i < k; ++i) {
            const double w = 1.0 / (cand[size_t(i)].h * cand[size_t(i)].h);
            a += w;
            b -= 2.0 * w * cand[size_t(i)].t;
            c += w * cand[size_t(i)].t * cand[size_t(i)].t;
        }
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) break;
        const double t = (-b + std::sqrt(disc)) / (2.0 * a);
        if (t < cand[size_t(k - 1)].t) break;  // causality: must exceed all used values
        best = t;
    }
    return best;
}

}  // namespace

std::vector<double> fast_marching_times(const VoxelVolume& mask, std::int64_t seed_idx) {
    mask.validate();
    if (seed_idx < 0 || seed_idx >= mask.size() || mask.values[size_t(seed_idx)] == 0.0f)
        throw InputError("fast marching seed outside mask");

    const std::vector<float> dist = distance_to_boundary_mm(mask);
    const std::int64_t n = mask.size();
    std::vector<double> times(size_t(n), kInf);
    std::vector<char> accepted(size_t(n), 0);

    using Entry = std::pair<double, std::int64_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    times[size_t(seed_idx)] = 0.0;
    heap.emplace(0.0, seed_idx);

    const auto speed_at = [&](std::int64_t i) {
        const double d = dist[size_t(i)];
        return (1.0 + d) * (1.0 + d);
    };

    while (!heap.empty()) {
        const auto [t, cur] = heap.top();
        heap.pop();
        if (accepted[size_t(cur)]) continue;
        accepted[size_t(cur)] = 1;

        const auto [x, y, z] = mask.coords(cur);
        const std::array<std::array<int, 3>, 6> nbrs = {{{x - 1, y, z}, {x + 1, y, z},
                                                         {x, y - 1, z}, {x, y + 1, z},
                                                         {x, y, z - 1}, {x, y, z + 1}}};
        for (const auto& nb : nbrs) {
            if (!mask.inside(nb[0], nb[1], nb[2])) continue;
            const std::int64_t ni = mask.index(nb[0], nb[1], nb[2]);
            if (accepted[size_t(ni)] || mask.values[size_t(ni)] == 0.0f) continue;

            std::array<double, 3> t_axis{kInf, kInf, kInf};
            const std::array<int, 3> nc = {nb[0], nb[1], nb[2]};
            for (int a = 0; a < 3; ++a) {
                for (int s = -1; s <= 1; s += 2) {
                    std::array<int, 3> m = nc;
                    m[size_t(a)] += s;
                    if (!mask.inside(m[0], m[1], m[2])) continue;
                    const std::int64_t mi = mask.index(m[0], m[1], m[2]);
                    if (accepted[size_t(mi)])
                        t_axis[size_t(a)] = std::min(t_axis[size_t(a)], times[size_t(mi)]);
                }
            }
            const double tn = eikonal_update(t_axis, mask.spacing_mm, speed_at(ni));
            if (tn < times[size_t(ni)]) {
                times[size_t(ni)] = tn;
                heap.emplace(tn, ni);
            }
        }
    }
    return times;
}

namespace {

// Steepest-descent path from endpoint back to the seed. The 6-neighborhood
// matches the fast-marching stencil, so a strictly descending neighbor
// always exists and single-voxel-wide routes are followed exactly.
std::vector<std::int64_t> backtrack(const VoxelVolume& mask, const std::vector<double>& times,
                                    std::int64_t endpoint) {
    std::vector<std::int64_t> path{endpoint};
    std::int64_t cur = endpoint;
    const std::int64_t cap = mask.size();
    while (times[size_t(cur)] > 0.0) {
        const auto [x, y, z] = mask.coords(cur);
        std::int64_t best = -1;
        double best_t = times[size_t(cur)];
        const std::array<std::array<int, 3>, 6> nbrs = {{{x - 1, y, z}, {x + 1, y, z},
                                                         {x, y - 1, z}, {x, y + 1, z},
                                                         {x, y, z - 1}, {x, y, z + 1}}};
        for (const auto& nb : nbrs) {
            if (!mask.inside(nb[0], nb[1], nb[2])) continue;
            const std::int64_t ni = mask.index(nb[0], nb[1], nb[2]);
            if (mask.values[size_t(ni)] == 0.0f) continue;
            const double t = times[size_t(ni)];
            if (t < best_t || (t == best_t && best >= 0 && ni < best)) {
                best_t = t;
                best = ni;
            }
        }
        if (best < 0)
            throw NumericalError("backtracking stalled before reaching the seed");
        path.push_back(best);
        cur = best;
        if (std::int64_t(path.size()) > cap)
            throw NumericalError("backtracking exceeded the voxel count");
    }
    std::reverse(path.begin(), path.end());  // seed -> endpoint
    return path;
}

struct ForestBuilder {
    const VoxelVolume& mask;
    VesselTree tree;
    std::unordered_map<std::int64_t, int> point_at_voxel;  // voxel index -> point id
    std::vector<std::int64_t> voxel_of_point;
    std::vector<int> pos_in_branch;  // per point, index within its branch

    explicit ForestBuilder(const VoxelVolume& m) : mask(m) {}

    int add_point(std::int64_t voxel, int branch_id) {
        const int id = int(tree.points.size());
        const auto [x, y, z] = mask.coords(voxel);
        CenterlinePoint p;
        p.id = id;
        p.pos_mm = mask.position_mm(x, y, z);
        p.branch_id = branch_id;
        tree.points.push_back(p);
        voxel_of_point.push_back(voxel);
        pos_in_branch.push_back(-1);
        point_at_voxel.emplace(voxel, id);
        return id;
    }

    // A path voxel "coincides" with the existing forest when the voxel itself
    // or any 26-neighbor is already claimed. Returns the claimed point id.
    int coincident_point(std::int64_t voxel) const {
        auto it = point_at_voxel.find(voxel);
        if (it != point_at_voxel.end()) return it->second;
        const auto [x, y, z] = mask.coords(voxel);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    if (!mask.inside(x + dx, y + dy, z + dz)) continue;
                    auto jt = point_at_voxel.find(mask.index(x + dx, y + dy, z + dz));
                    if (jt != point_at_voxel.end()) return jt->second;
                }
        return -1;
    }

    // Splits branch b after position pos: [0..pos] stays in b, the remainder
    // becomes a new branch parented to b. Returns the new branch id.
    int split_branch(int b, int pos) {
        Branch& parent = tree.branches[size_t(b)];
        const int nb = int(tree.branches.size());
        Branch tail;
        tail.id = nb;
        tail.parent_branch = b;
        tail.point_ids.assign(parent.point_ids.begin() + pos + 1, parent.point_ids.end());
        parent.point_ids.resize(size_t(pos) + 1);
        for (int i = 0; i < int(tail.point_ids.size()); ++i) {
            const int pid = tail.point_ids[size_t(i)];
            tree.points[size_t(pid)].branch_id = nb;
            pos_in_branch[size_t(pid)] = i;
        }
        // re-parent bifurcations and branches that hung off the moved tail
        for (auto& bif : tree.bifurcations) {
            if (tree.points[size_t(bif.point_id)].branch_id != nb) continue;
            for (int cb : bif.child_branches) tree.branches[size_t(cb)].parent_branch = nb;
        }
        tree.branches.push_back(std::move(tail));
        return nb;
    }

    void add_path(const std::vector<std::int64_t>& path) {
        if (path.size() < 2) return;
        if (tree.branches.empty()) {
            Branch root;
            root.id = 0;
            root.parent_branch = -1;
            for (std::size_t i = 0; i < path.size(); ++i) {
                const int pid = add_point(path[i], 0);
                pos_in_branch[size_t(pid)] = int(i);
                if (i > 0) tree.points[size_t(pid)].parent_id = root.point_ids.back();
                root.point_ids.push_back(pid);
            }
            tree.branches.push_back(std::move(root));
            return;
        }

        // longest coincident prefix
        std::size_t k = 0;
        int anchor_point = -1;
        while (k < path.size()) {
            const int p = coincident_point(path[k]);
            if (p < 0) break;
            anchor_point = p;
            ++k;
        }
        if (k == path.size() || anchor_point < 0) return;  // fully contained or detached

        const int anchor_branch = tree.points[size_t(anchor_point)].branch_id;
        const int anchor_pos = pos_in_branch[size_t(anchor_point)];
        const bool anchor_at_tail =
            anchor_pos == int(tree.branches[size_t(anchor_branch)].point_ids.size()) - 1;
        const bool anchor_has_bif =
            std::any_of(tree.bifurcations.begin(), tree.bifurcations.end(),
                        [&](const Bifurcation& b) { return b.point_id == anchor_point; });

        if (anchor_at_tail && !anchor_has_bif) {
            // continuation of an existing branch, not a fork
            Branch& ext = tree.branches[size_t(anchor_branch)];
            int prev = anchor_point;
            for (std::size_t i = k; i < path.size(); ++i) {
                if (point_at_voxel.count(path[i])) continue;
                const int pid = add_point(path[i], anchor_branch);
                pos_in_branch[size_t(pid)] = int(ext.point_ids.size());
                tree.points[size_t(pid)].parent_id = prev;
                ext.point_ids.push_back(pid);
                prev = pid;
            }
            return;
        }

        const int fork_branch = anchor_branch;
        if (!anchor_at_tail)
            split_branch(anchor_branch, anchor_pos);  // anchor becomes this branch's tail

        const int nb = int(tree.branches.size());
        Branch child;
        child.id = nb;
        child.parent_branch = fork_branch;
        for (std::size_t i = k; i < path.size(); ++i) {
            if (point_at_voxel.count(path[i])) continue;  // re-coincidence, keep unique
            const int pid = add_point(path[i], nb);
            pos_in_branch[size_t(pid)] = int(child.point_ids.size());
            tree.points[size_t(pid)].parent_id =
                child.point_ids.empty() ? anchor_point : child.point_ids.back();
            child.point_ids.push_back(pid);
        }
        if (child.point_ids.empty()) return;
        tree.branches.push_back(std::move(child));

        // register the fork as a bifurcation (or extend an existing one)
        Bifurcation* bif = nullptr;
        for (auto& b : tree.bifurcations)
            if (b.point_id == anchor_point) bif = &b;
        if (bif == nullptr) {
            Bifurcation b;
            b.point_id = anchor_point;
            // the split tail (if any) is the sibling child
            for (const auto& br : tree.branches)
                if (br.parent_branch == fork_branch && br.id != nb &&
                    !br.point_ids.empty() &&
                    tree.points[size_t(br.point_ids.front())].parent_id == anchor_point)
                    b.child_branches.push_back(br.id);
            b.child_branches.push_back(nb);
            tree.bifurcations.push_back(std::move(b));
        } else {
            bif->child_branches.push_back(nb);
        }
    }
};

}  // namespace

std::vector<std::array<int, 3>> detect_endpoints(const VoxelVolume& mask,
                                                 const std::vector<double>& times,
                                                 const std::vector<float>& dist_mm,
                                                 std::int64_t seed_idx) {
    struct Candidate {
        double t;
        std::int64_t idx;
    };
    std::vector<Candidate> candidates;
    for (std::int64_t i = 0; i < mask.size(); ++i) {
        if (mask.values[size_t(i)] == 0.0f || !std::isfinite(times[size_t(i)]) ||
            times[size_t(i)] <= 0.0)
            continue;
        const auto [x, y, z] = mask.coords(i);
        bool is_max = true;
        for (int dz = -1; dz <= 1 && is_max; ++dz)
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1 && is_max; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    if (!mask.inside(x + dx, y + dy, z + dz)) continue;
                    const std::int64_t ni = mask.index(x + dx, y + dy, z + dz);
                    if (mask.values[size_t(ni)] == 0.0f) continue;
                    if (times[size_t(ni)] > times[size_t(i)]) is_max = false;
                }
        if (is_max) candidates.push_back({times[size_t(i)], i});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.t != b.t) return a.t > b.t;
        return a.idx < b.idx;
    });

    // non-maximum suppression: one tip per end disc; the seed counts as the
    // tip of its own end
    const double min_vox = 4.0 * mask.spacing_mm.minCoeff();
    std::vector<std::array<int, 3>> accepted;
    std::vector<Vec3> accepted_pos;
    std::vector<double> accepted_radius;
    if (seed_idx >= 0) {
        const auto [sx, sy, sz] = mask.coords(seed_idx);
        accepted_pos.push_back(mask.position_mm(sx, sy, sz));
        accepted_radius.push_back(dist_mm[size_t(seed_idx)]);
    }
    for (const auto& c : candidates) {
        const auto [x, y, z] = mask.coords(c.idx);
        const Vec3 p = mask.position_mm(x, y, z);
        const double r = dist_mm[size_t(c.idx)];
        bool suppressed = false;
        for (std::size_t k = 0; k < accepted_pos.size() && !suppressed; ++k) {
            const double sep =
                std::max(min_vox, 4.0 * std::max(r, accepted_radius[k]) + 2.0 * min_vox);
            suppressed = (p - accepted_pos[k]).norm() < sep;
        }
        if (suppressed) continue;
        accepted.push_back({x, y, z});
        accepted_pos.push_back(p);
        accepted_radius.push_back(r);
    }
    return accepted;
}

VesselTree extract_centerline_auto(const VoxelVolume& mask) {
    mask.validate();
    const std::vector<float> dist = distance_to_boundary_mm(mask);
    std::int64_t center = -1;
    float best = 0.0f;
    for (std::int64_t i = 0; i < mask.size(); ++i)
        if (dist[size_t(i)] > best) {
            best = dist[size_t(i)];
            center = i;
        }
    if (center < 0) throw InputError("mask is empty");

    // re-seed at the farthest reachable voxel so the seed sits at a tip
    const std::vector<double> t0 = fast_marching_times(mask, center);
    std::int64_t seed = center;
    double tmax = 0.0;
    for (std::int64_t i = 0; i < mask.size(); ++i)
        if (std::isfinite(t0[size_t(i)]) && t0[size_t(i)] > tmax) {
            tmax = t0[size_t(i)];
            seed = i;
        }

    const std::vector<double> times = fast_marching_times(mask, seed);
    const std::vector<std::array<int, 3>> endpoints = detect_endpoints(mask, times, dist, seed);
    if (endpoints.empty()) throw InputError("no centerline endpoints detected");
    const auto [sx, sy, sz] = mask.coords(seed);
    return extract_centerline(mask, {sx, sy, sz}, endpoints);
}

VesselTree extract_centerline(const VoxelVolume& mask, std::array<int, 3> seed,
                              const std::vector<std::array<int, 3>>& endpoints) {
    mask.validate();
    if (!mask.inside(seed[0], seed[1], seed[2]) ||
        mask.at(seed[0], seed[1], seed[2]) == 0.0f)
        throw InputError("seed outside mask");
    const std::int64_t seed_idx = mask.index(seed[0], seed[1], seed[2]);

    const std::vector<double> times = fast_marching_times(mask, seed_idx);
    const std::vector<float> dist = distance_to_boundary_mm(mask);

    ForestBuilder builder(mask);
    for (const auto& ep : endpoints) {
        if (!mask.inside(ep[0], ep[1], ep[2]) || mask.at(ep[0], ep[1], ep[2]) == 0.0f)
            throw InputError("endpoint outside mask");
        const std::int64_t ei = mask.index(ep[0], ep[1], ep[2]);
        if (!std::isfinite(times[size_t(ei)]))
            throw InputError("endpoint unreachable from seed");
        builder.add_path(backtrack(mask, times, ei));
    }

    VesselTree tree = std::move(builder.tree);
    for (std::size_t i = 0; i < tree.points.size(); ++i)
        tree.points[i].radius_mm = std::max(1e-6, double(dist[size_t(builder.voxel_of_point[i])]));

    for (auto& branch : tree.branches) {
        double s = 0.0;
        for (std::size_t i = 0; i < branch.point_ids.size(); ++i) {
            auto& p = tree.points[size_t(branch.point_ids[i])];
            if (i > 0)
                s += (p.pos_mm - tree.points[size_t(branch.point_ids[i - 1])].pos_mm).norm();
            p.arc_length_mm = s;
        }
    }
    return tree;
}

}  // namespace artery
