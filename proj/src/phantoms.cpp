#include "artery/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace artery {

PhantomKind phantom_kind_from_string(const std::string& name) {
    if (name == "straight_tube") return PhantomKind::StraightTube;
    if (name == "bent_tube") return PhantomKind::BentTube;
    if (name == "y_branch") return PhantomKind::YBranch;
    if (name == "helix") return PhantomKind::Helix;
    if (name == "torus_arc") return PhantomKind::TorusArc;
    throw InputError("unknown phantom kind: " + name);
}

MotionMode motion_mode_from_string(const std::string& name) {
    if (name == "rigid_translate") return MotionMode::RigidTranslate;
    if (name == "bend_cycle") return MotionMode::BendCycle;
    if (name == "breathe") return MotionMode::Breathe;
    throw InputError("unknown motion mode: " + name);
}

void PhantomSpec::validate() const {
    if (!(radius_mm > 0) || !(length_mm > 0) || !(voxel_mm > 0))
        throw InputError("phantom dimensions must be positive");
    if (radius_mm < 2.0 * voxel_mm)
        throw InputError("phantom tube under-resolved: radius below 2 voxels");
}

double PhantomSpec::profile_sigma() const {
    return profile_width_mm > 0 ? profile_width_mm : radius_mm / std::sqrt(2.0 * std::log(2.0));
}

namespace {

struct AnalyticCurve {
    // polyline segments per branch, plus branch/bifurcation layout
    std::vector<std::vector<Vec3>> branch_points;
    std::vector<int> parent;                   // parent branch id or -1
    std::vector<std::pair<int, int>> forks;    // (parent branch, fork point index)
};

AnalyticCurve phantom_curve(const PhantomSpec& spec) {
    AnalyticCurve curve;
    const double step = 0.5 * spec.voxel_mm;
    const auto sample = [&](auto&& f, double len) {
        std::vector<Vec3> pts;
        const int n = std::max(2, int(std::ceil(len / step)) + 1);
        for (int i = 0; i < n; ++i) pts.push_back(f(len * i / (n - 1)));
        return pts;
    };

    switch (spec.kind) {
        case PhantomKind::StraightTube: {
            curve.branch_points.push_back(
                sample([&](double s) { return Vec3(0, 0, s); }, spec.length_mm));
            curve.parent.push_back(-1);
            break;
        }
        case PhantomKind::BentTube:
        case PhantomKind::TorusArc: {
            // quarter arc of radius R, arc length = length_mm
            const double r = spec.length_mm / (M_PI / 2.0);
            curve.branch_points.push_back(sample(
                [&](double s) {
                    const double a = s / r;
                    return Vec3(r * (1.0 - std::cos(a)), 0, r * std::sin(a));
                },
                spec.length_mm));
            curve.parent.push_back(-1);
            break;
        }
        case PhantomKind::Helix: {
            const double rh = 4.0 * spec.radius_mm;
            const double pitch = 8.0 * spec.radius_mm;
            const double c = pitch / (2.0 * M_PI);
            const double speed = std::sqrt(rh * rh + c * c);
            curve.branch_points.push_back(sample(
                [&](double s) {
                    const double a = s / speed;
                    return Vec3(rh * std::cos(a) - rh, rh * std::sin(a), c * a);
                },
                spec.length_mm));
            curve.parent.push_back(-1);
            break;
        }
        case PhantomKind::YBranch: {
            const double trunk = 0.5 * spec.length_mm;
            const double arm = 0.5 * spec.length_mm;
            const double angle = 35.0 * M_PI / 180.0;
            auto trunk_pts = sample([&](double s) { return Vec3(0, 0, s); }, trunk);
            curve.branch_points.push_back(trunk_pts);
            curve.parent.push_back(-1);
            const Vec3 fork = trunk_pts.back();
            const Vec3 d1(std::sin(angle), 0, std::cos(angle));
            const Vec3 d2(-std::sin(angle), 0, std::cos(angle));
            // arms start one step beyond the fork point (the fork owns it)
            curve.branch_points.push_back(
                sample([&](double s) { return Vec3(fork + (s + step) * d1); }, arm));
            curve.parent.push_back(0);
            curve.branch_points.push_back(
                sample([&](double s) { return Vec3(fork + (s + step) * d2); }, arm));
            curve.parent.push_back(0);
            curve.forks.push_back({0, int(trunk_pts.size()) - 1});
            break;
        }
    }
    return curve;
}

}  // namespace

VesselTree phantom_tree(const PhantomSpec& spec) {
    const AnalyticCurve curve = phantom_curve(spec);
    VesselTree tree;
    std::vector<int> branch_head(curve.branch_points.size(), -1);
    for (int b = 0; b < int(curve.branch_points.size()); ++b) {
        Branch branch;
        branch.id = b;
        branch.parent_branch = curve.parent[size_t(b)];
        double s = 0.0;
        for (std::size_t i = 0; i < curve.branch_points[size_t(b)].size(); ++i) {
            CenterlinePoint p;
            p.id = int(tree.points.size());
            p.pos_mm = curve.branch_points[size_t(b)][i];
            p.radius_mm = spec.radius_mm;
            if (i > 0) s += (p.pos_mm - tree.points[size_t(branch.point_ids.back())].pos_mm).norm();
            p.arc_length_mm = s;
            p.branch_id = b;
            if (i > 0) p.parent_id = branch.point_ids.back();
            branch.point_ids.push_back(p.id);
            tree.points.push_back(p);
        }
        branch_head[size_t(b)] = branch.point_ids.front();
        tree.branches.push_back(std::move(branch));
    }
    for (const auto& [parent_branch, point_pos] : curve.forks) {
        Bifurcation bif;
        bif.point_id = tree.branches[size_t(parent_branch)].point_ids[size_t(point_pos)];
        for (int b = 0; b < int(curve.parent.size()); ++b)
            if (curve.parent[size_t(b)] == parent_branch) {
                bif.child_branches.push_back(b);
                tree.points[size_t(branch_head[size_t(b)])].parent_id = bif.point_id;
            }
        tree.bifurcations.push_back(std::move(bif));
    }
    return analyze_topology(std::move(tree));
}

namespace {

// min distance field to the union of centerline segments, rasterized per
// segment over padded bounding boxes
void rasterize_tube(VoxelVolume& vol, const VesselTree& tree, double pad_mm,
                    std::vector<float>& dist) {
    dist.assign(size_t(vol.size()), std::numeric_limits<float>::infinity());
    for (const auto& branch : tree.branches) {
        for (std::size_t i = 0; i + 1 < branch.point_ids.size(); ++i) {
            const Vec3 a = tree.point(branch.point_ids[i]).pos_mm;
            const Vec3 b = tree.point(branch.point_ids[i + 1]).pos_mm;
            const Vec3 lo = a.cwiseMin(b) - Vec3::Constant(pad_mm);
            const Vec3 hi = a.cwiseMax(b) + Vec3::Constant(pad_mm);
            std::array<int, 3> ilo, ihi;
            for (int ax = 0; ax < 3; ++ax) {
                ilo[size_t(ax)] = std::max(
                    0, int(std::floor((lo[ax] - vol.origin_mm[ax]) / vol.spacing_mm[ax])));
                ihi[size_t(ax)] = std::min(
                    vol.dims[size_t(ax)] - 1,
                    int(std::ceil((hi[ax] - vol.origin_mm[ax]) / vol.spacing_mm[ax])));
            }
            const Vec3 ab = b - a;
            const double len2 = ab.squaredNorm();
            for (int z = ilo[2]; z <= ihi[2]; ++z)
                for (int y = ilo[1]; y <= ihi[1]; ++y)
                    for (int x = ilo[0]; x <= ihi[0]; ++x) {
                        const Vec3 p = vol.position_mm(x, y, z);
                        const double t =
                            len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
                        const float d = float((p - (a + t * ab)).norm());
                        float& cur = dist[size_t(vol.index(x, y, z))];
                        cur = std::min(cur, d);
                    }
        }
    }
}

}  // namespace

Phantom make_phantom(const PhantomSpec& spec) {
    spec.validate();
    Phantom out;
    out.tree = phantom_tree(spec);

    // volume sized to the tree bounds plus profile support
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    for (const auto& p : out.tree.points) {
        lo = lo.cwiseMin(p.pos_mm);
        hi = hi.cwiseMax(p.pos_mm);
    }
    const double sigma = spec.profile_sigma();
    const double margin = spec.radius_mm + 3.0 * sigma;
    const Vec3 origin = lo - Vec3::Constant(margin);
    std::array<int, 3> dims;
    for (int ax = 0; ax < 3; ++ax)
        dims[size_t(ax)] =
            std::max(4, int(std::ceil((hi[ax] - lo[ax] + 2.0 * margin) / spec.voxel_mm)) + 1);
    out.volume = VoxelVolume::zeros(dims, Vec3::Constant(spec.voxel_mm), origin);

    std::vector<float> dist;
    rasterize_tube(out.volume, out.tree, margin, dist);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (std::int64_t i = 0; i < out.volume.size(); ++i) {
        const double d = dist[size_t(i)];
        if (std::isfinite(d)) out.volume.values[size_t(i)] = float(std::exp(-d * d * inv2s2));
    }

    const auto sections = build_cross_sections(out.tree, 2.0);
    MeshSizingParams sizing;
    out.surface = loft_tree_surface(sections, out.tree, sizing);
    return out;
}

VoxelVolume phantom_mask(const PhantomSpec& spec) {
    Phantom p = make_phantom(spec);
    VoxelVolume mask = VoxelVolume::zeros(p.volume.dims, p.volume.spacing_mm, p.volume.origin_mm);
    for (std::int64_t i = 0; i < p.volume.size(); ++i)
        mask.values[size_t(i)] = p.volume.values[size_t(i)] > 0.5f ? 1.0f : 0.0f;
    return mask;
}

std::vector<KeyPose> make_motion_keyposes(const HandleSet& handles, const TetMesh& mesh,
                                          const std::vector<CrossSection>& rest_sections,
                                          MotionMode mode, int n_phases, double amplitude) {
    if (n_phases < 2) throw InputError("n_phases must be >= 2");
    const int nh = handles.count();

    // proximal pivot: first node of the first handle
    const Vec3 pivot = mesh.nodes.col(handles.handles.front().centerline_nodes.front());
    double max_arc = 1e-9;
    for (const auto& h : handles.handles) max_arc = std::max(max_arc, h.arc_end_mm);

    std::vector<KeyPose> poses(static_cast<size_t>(n_phases));
    for (int k = 0; k < n_phases; ++k) {
        KeyPose pose;
        pose.phase_index = k;
        pose.rr_percent = 100.0 * k / n_phases;
        const double phase = std::sin(2.0 * M_PI * k / n_phases);
        pose.transforms.resize(size_t(nh));
        for (int b = 0; b < nh; ++b) {
            switch (mode) {
                case MotionMode::RigidTranslate:
                    pose.transforms[size_t(b)] =
                        RigidTransform::translate(amplitude * phase * Vec3(0, 1, 0));
                    break;
                case MotionMode::BendCycle: {
                    // distal handles bend about the proximal pivot, ramped by arc
                    const double ramp =
                        std::clamp(handles.handles[size_t(b)].arc_begin_mm / max_arc, 0.0, 1.0);
                    const double angle = amplitude * phase * ramp * M_PI / 180.0;
                    const Quat q(Eigen::AngleAxisd(angle, Vec3::UnitX()));
                    pose.transforms[size_t(b)] = RigidTransform::rotate_about(q, pivot);
                    break;
                }
                case MotionMode::Breathe:
                    pose.transforms[size_t(b)] = RigidTransform{};
                    break;
            }
        }
        pose.sections.resize(rest_sections.size());
        for (std::size_t s = 0; s < rest_sections.size(); ++s) {
            const double eps = mode == MotionMode::Breathe ? amplitude * phase : 0.0;
            const CrossSection deformed = deform_cross_section(rest_sections[s], eps);
            pose.sections[s] = {deformed.a_mm, deformed.b_mm, eps};
        }
        poses[size_t(k)] = std::move(pose);
    }
    return poses;
}

}  // namespace artery
