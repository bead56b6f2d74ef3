#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "artery/tree.hpp"
#include "artery/phantoms.hpp"
#include "../tests/oracles.hpp"

#include <cmath>

using namespace artery;

namespace {

VoxelVolume straight_tube_mask(int radius_vox, int length_vox, double spacing = 0.5) {
    const int nx = 2 * radius_vox + 9, ny = nx, nz = length_vox + 8;
    VoxelVolume mask = VoxelVolume::zeros({nx, ny, nz}, Vec3::Constant(spacing));
    const int cx = nx / 2, cy = ny / 2;
    for (int z = 4; z < 4 + length_vox; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy <= double(radius_vox) * radius_vox) mask.at(x, y, z) = 1.0f;
            }
    return mask;
}

}  // namespace

TEST_CASE("single-voxel L-path is recovered exactly") {
    VoxelVolume mask = VoxelVolume::zeros({12, 12, 4}, Vec3::Constant(1.0));
    std::vector<std::array<int, 3>> path;
    for (int x = 2; x <= 8; ++x) path.push_back({x, 2, 1});
    for (int y = 3; y <= 9; ++y) path.push_back({8, y, 1});
    for (const auto& p : path) mask.at(p[0], p[1], p[2]) = 1.0f;

    const VesselTree tree = extract_centerline(mask, path.front(), {path.back()});
    REQUIRE(tree.branches.size() == 1);
    REQUIRE(tree.points.size() == path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        const Vec3 expected = mask.position_mm(path[i][0], path[i][1], path[i][2]);
        CHECK((tree.points[i].pos_mm - expected).norm() == 0.0);
    }
    tree.validate();
}

TEST_CASE("straight tube: axis accuracy and geodesic length vs dijkstra") {
    const double spacing = 0.5;
    const VoxelVolume mask = straight_tube_mask(4, 80, spacing);
    const int cx = mask.dims[0] / 2, cy = mask.dims[1] / 2;
    const std::array<int, 3> seed{cx, cy, 4};
    const std::array<int, 3> endpoint{cx, cy, 83};

    const VesselTree tree = extract_centerline(mask, seed, {endpoint});
    REQUIRE(tree.branches.size() == 1);

    // every centerline point within 0.5 voxel of the true axis
    double worst = 0.0;
    for (const auto& p : tree.points) {
        const double dx = (p.pos_mm.x() - cx * spacing) / spacing;
        const double dy = (p.pos_mm.y() - cy * spacing) / spacing;
        worst = std::max(worst, std::hypot(dx, dy));
    }
    CHECK(worst <= 0.5);

    const double geodesic = tree.points[size_t(tree.branches[0].point_ids.back())].arc_length_mm;
    const double reference = oracle::dijkstra_geodesic_mm(mask, seed, endpoint);
    CHECK(std::abs(geodesic - reference) <= 0.02 * reference);
}

TEST_CASE("arc length equals the sum of consecutive distances") {
    const VoxelVolume mask = straight_tube_mask(3, 30);
    const int cx = mask.dims[0] / 2, cy = mask.dims[1] / 2;
    const VesselTree tree = extract_centerline(mask, {cx, cy, 4}, {{cx, cy, 33}});
    for (const auto& branch : tree.branches) {
        double s = 0.0;
        for (std::size_t i = 0; i < branch.point_ids.size(); ++i) {
            const auto& p = tree.point(branch.point_ids[i]);
            if (i > 0)
                s += (p.pos_mm - tree.point(branch.point_ids[i - 1]).pos_mm).norm();
            CHECK(std::abs(p.arc_length_mm - s) <= 1e-9 * std::max(1.0, s));
        }
    }
}

TEST_CASE("arrival times decrease along backtracked paths") {
    const VoxelVolume mask = straight_tube_mask(3, 40);
    const int cx = mask.dims[0] / 2, cy = mask.dims[1] / 2;
    const std::int64_t seed = mask.index(cx, cy, 4);
    const std::vector<double> times = fast_marching_times(mask, seed);
    CHECK(times[size_t(seed)] == 0.0);

    const VesselTree tree = extract_centerline(mask, {cx, cy, 4}, {{cx, cy, 43}});
    // walking a branch toward the root, arrival times must not increase
    for (const auto& branch : tree.branches) {
        double prev = -1.0;
        for (int pid : branch.point_ids) {
            const Vec3 p = tree.point(pid).pos_mm;
            const int x = int(std::lround(p.x() / mask.spacing_mm.x()));
            const int y = int(std::lround(p.y() / mask.spacing_mm.y()));
            const int z = int(std::lround(p.z() / mask.spacing_mm.z()));
            const double t = times[size_t(mask.index(x, y, z))];
            CHECK(t >= prev);
            prev = t;
        }
    }
}

TEST_CASE("y-branch phantom yields 3 branches and 1 bifurcation") {
    PhantomSpec spec;
    spec.kind = PhantomKind::YBranch;
    spec.radius_mm = 1.5;
    spec.length_mm = 24.0;
    spec.voxel_mm = 0.5;
    const VoxelVolume mask = phantom_mask(spec);
    const VesselTree gt = phantom_tree(spec);

    // seed at the trunk head, endpoints at the arm tips
    const auto to_voxel = [&](const Vec3& p) {
        return std::array<int, 3>{int(std::lround((p.x() - mask.origin_mm.x()) / mask.spacing_mm.x())),
                                  int(std::lround((p.y() - mask.origin_mm.y()) / mask.spacing_mm.y())),
                                  int(std::lround((p.z() - mask.origin_mm.z()) / mask.spacing_mm.z()))};
    };
    const auto seed = to_voxel(gt.point(gt.branches[0].point_ids.front()).pos_mm);
    const auto tip1 = to_voxel(gt.point(gt.branches[1].point_ids.back()).pos_mm);
    const auto tip2 = to_voxel(gt.point(gt.branches[2].point_ids.back()).pos_mm);

    const VesselTree tree = extract_centerline(mask, seed, {tip1, tip2});
    tree.validate();
    CHECK(tree.branches.size() == 3);
    CHECK(tree.bifurcations.size() == 1);
    REQUIRE(tree.bifurcations.size() >= 1);
    CHECK(tree.bifurcations[0].child_branches.size() == 2);
}

TEST_CASE("error paths: seed outside, endpoint unreachable") {
    VoxelVolume mask = VoxelVolume::zeros({10, 10, 10}, Vec3::Constant(1.0));
    for (int x = 1; x < 4; ++x) mask.at(x, 2, 2) = 1.0f;
    for (int x = 6; x < 9; ++x) mask.at(x, 7, 7) = 1.0f;  // disconnected island

    CHECK_THROWS_AS(extract_centerline(mask, {0, 0, 0}, {{2, 2, 2}}), InputError);
    CHECK_THROWS_AS(extract_centerline(mask, {1, 2, 2}, {{7, 7, 7}}), InputError);
}

TEST_CASE("murray residuals and angles") {
    // hand-built symmetric bifurcation
    VesselTree tree;
    const auto add_point = [&](Vec3 p, double r, int branch, int id, std::optional<int> parent) {
        CenterlinePoint cp;
        cp.id = id;
        cp.pos_mm = p;
        cp.radius_mm = r;
        cp.branch_id = branch;
        cp.parent_id = parent;
        tree.points.push_back(cp);
    };
    const double rp = std::cbrt(2.0);
    add_point({0, 0, 0}, rp, 0, 0, std::nullopt);
    add_point({0, 0, 2}, rp, 0, 1, 0);
    add_point({1, 0, 3}, 1.0, 1, 2, 1);
    add_point({2, 0, 4}, 1.0, 1, 3, 2);
    add_point({-1, 0, 3}, 1.0, 2, 4, 1);
    add_point({-2, 0, 4}, 1.0, 2, 5, 4);
    tree.branches.push_back({0, {0, 1}, -1});
    tree.branches.push_back({1, {2, 3}, 0});
    tree.branches.push_back({2, {4, 5}, 0});
    for (auto& b : tree.branches) {
        double s = 0;
        for (std::size_t i = 0; i < b.point_ids.size(); ++i) {
            if (i > 0)
                s += (tree.point(b.point_ids[i]).pos_mm - tree.point(b.point_ids[i - 1]).pos_mm).norm();
            tree.points[size_t(b.point_ids[i])].arc_length_mm = s;
        }
    }
    tree.bifurcations.push_back({1, {1, 2}, {}, 0.0, -1});

    const VesselTree out = analyze_topology(tree);
    REQUIRE(out.bifurcations.size() == 1);
    // r_p^3 = 2, r_d^3 + r_d^3 = 2 -> residual 0
    CHECK(out.bifurcations[0].murray_residual_mm3 == doctest::Approx(0.0).epsilon(1e-12));
    REQUIRE(out.bifurcations[0].angles_deg.size() == 1);
    CHECK(out.bifurcations[0].angles_deg[0] == doctest::Approx(90.0));

    // unequal case: r_p = 1, r_d = (1,1) -> residual -1
    VesselTree tree2 = tree;
    for (auto& p : tree2.points) p.radius_mm = 1.0;
    const VesselTree out2 = analyze_topology(tree2);
    CHECK(out2.bifurcations[0].murray_residual_mm3 == doctest::Approx(-1.0));
}

TEST_CASE("trifurcation residual generalizes") {
    VesselTree tree;
    const auto add_point = [&](Vec3 p, double r, int branch, int id, std::optional<int> parent) {
        CenterlinePoint cp;
        cp.id = id;
        cp.pos_mm = p;
        cp.radius_mm = r;
        cp.branch_id = branch;
        cp.parent_id = parent;
        tree.points.push_back(cp);
    };
    add_point({0, 0, 0}, 2.0, 0, 0, std::nullopt);
    add_point({0, 0, 2}, 2.0, 0, 1, 0);
    add_point({1, 0, 3}, 1.1, 1, 2, 1);
    add_point({2, 0, 4}, 1.1, 1, 3, 2);
    add_point({-1, 0, 3}, 1.2, 2, 4, 1);
    add_point({-2, 0, 4}, 1.2, 2, 5, 4);
    add_point({0, 1, 3}, 1.3, 3, 6, 1);
    add_point({0, 2, 4}, 1.3, 3, 7, 6);
    tree.branches.push_back({0, {0, 1}, -1});
    tree.branches.push_back({1, {2, 3}, 0});
    tree.branches.push_back({2, {4, 5}, 0});
    tree.branches.push_back({3, {6, 7}, 0});
    for (auto& b : tree.branches) {
        double s = 0;
        for (std::size_t i = 0; i < b.point_ids.size(); ++i) {
            if (i > 0)
                s += (tree.point(b.point_ids[i]).pos_mm - tree.point(b.point_ids[i - 1]).pos_mm).norm();
            tree.points[size_t(b.point_ids[i])].arc_length_mm = s;
        }
    }
    tree.bifurcations.push_back({1, {1, 2, 3}, {}, 0.0, -1});
    const VesselTree out = analyze_topology(tree);
    const double expected = 8.0 - (1.1 * 1.1 * 1.1 + 1.2 * 1.2 * 1.2 + 1.3 * 1.3 * 1.3);
    CHECK(out.bifurcations[0].murray_residual_mm3 == doctest::Approx(expected));
    CHECK(out.bifurcations[0].angles_deg.size() == 3);  // pairwise
    // main child: branch 3 has largest radius but same length; lengths equal,
    // so any consistent winner is fine; just require a valid id
    CHECK(out.bifurcations[0].main_child >= 1);
}

TEST_CASE("bifurcation with fewer than 2 children is rejected") {
    VesselTree tree;
    CenterlinePoint p;
    p.id = 0;
    p.pos_mm = Vec3::Zero();
    p.radius_mm = 1.0;
    p.branch_id = 0;
    tree.points.push_back(p);
    CenterlinePoint q = p;
    q.id = 1;
    q.pos_mm = Vec3(0, 0, 1);
    q.parent_id = 0;
    tree.points.push_back(q);
    tree.branches.push_back({0, {0, 1}, -1});
    tree.bifurcations.push_back({1, {0}, {}, 0.0, -1});
    CHECK_THROWS_AS(analyze_topology(tree), InputError);
}
