#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "artery/volume.hpp"

#include <cmath>
#include <random>

using namespace artery;

namespace {

// analytic Gaussian-profile tube along z, centered in the volume
VoxelVolume gaussian_tube(int nx, int ny, int nz, double spacing, double radius_mm) {
    VoxelVolume v = VoxelVolume::zeros({nx, ny, nz}, Vec3::Constant(spacing));
    const double cx = spacing * (nx - 1) / 2.0;
    const double cy = spacing * (ny - 1) / 2.0;
    const double sigma = radius_mm / std::sqrt(2.0 * std::log(2.0));
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double dx = x * spacing - cx;
                const double dy = y * spacing - cy;
                v.at(x, y, z) = float(std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
            }
    return v;
}

}  // namespace

TEST_CASE("parameter validation") {
    FrangiParams p;
    CHECK_NOTHROW(p.validate());
    p.n_scales = 0;
    CHECK_THROWS_AS(p.validate(), InputError);
    p.n_scales = 3;
    p.sigma_min_mm = 3.0;  // > sigma_max
    CHECK_THROWS_AS(p.validate(), InputError);

    VoxelVolume v = VoxelVolume::zeros({4, 4, 4}, Vec3::Constant(1.0));
    v.spacing_mm.x() = -1.0;
    CHECK_THROWS_AS(v.validate(), InputError);
    CHECK_THROWS_AS(compute_vesselness(v, FrangiParams{}), InputError);
}

TEST_CASE("uniform volume has zero vesselness") {
    VoxelVolume v = VoxelVolume::zeros({24, 24, 24}, Vec3::Constant(0.5));
    for (auto& x : v.values) x = 5.0f;
    FrangiParams p;
    p.sigma_min_mm = 1.0;
    p.sigma_max_mm = 2.0;
    p.n_scales = 2;
    const VoxelVolume out = compute_vesselness(v, p);
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out.values[size_t(i)] == 0.0f);
}

TEST_CASE("bright plate is suppressed") {
    // slab: intensity varies along z only
    VoxelVolume v = VoxelVolume::zeros({32, 32, 32}, Vec3::Constant(0.5));
    const double cz = 0.5 * 15.5;
    for (int z = 0; z < 32; ++z)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const double dz = z * 0.5 - cz;
                v.at(x, y, z) = float(std::exp(-dz * dz / (2.0 * 1.0)));
            }
    FrangiParams p;
    p.sigma_min_mm = 0.8;
    p.sigma_max_mm = 1.6;
    p.n_scales = 3;
    const VoxelVolume out = compute_vesselness(v, p);
    float worst = 0.0f;
    for (int z = 8; z < 24; ++z)
        for (int y = 8; y < 24; ++y)
            for (int x = 8; x < 24; ++x) worst = std::max(worst, out.at(x, y, z));
    CHECK(worst < 1e-3f);
}

TEST_CASE("bright tube: axis response at least twice the wall response") {
    const double spacing = 0.25, radius = 1.0;
    const VoxelVolume v = gaussian_tube(48, 48, 40, spacing, radius);
    FrangiParams p;  // defaults: sigma 0.5..2.5, 5 scales
    const VoxelVolume out = compute_vesselness(v, p);

    const int cx = 23, cy = 23;  // (nx-1)/2 with nx=48 is 23.5; sample both center voxels
    double axis = 0.0, wall = 0.0;
    int n_axis = 0, n_wall = 0;
    const int wall_off = int(radius / spacing);  // 4 voxels from the axis
    for (int z = 8; z < 32; ++z) {
        for (int dx : {0, 1})
            for (int dy : {0, 1}) {
                axis += out.at(cx + dx, cy + dy, z);
                ++n_axis;
            }
        wall += out.at(cx + wall_off, cy, z);
        wall += out.at(cx - wall_off + 1, cy, z);
        wall += out.at(cx, cy + wall_off, z);
        wall += out.at(cx, cy - wall_off + 1, z);
        n_wall += 4;
    }
    axis /= n_axis;
    wall /= n_wall;
    CHECK(axis >= 2.0 * wall);
    for (float x : out.values) {
        CHECK(x >= 0.0f);
        CHECK(x <= 1.0f);
    }
}

TEST_CASE("vesselness invariant under intensity offset") {
    const VoxelVolume v = gaussian_tube(28, 28, 24, 0.4, 1.0);
    VoxelVolume shifted = v;
    for (auto& x : shifted.values) x += 100.0f;
    FrangiParams p;
    p.sigma_min_mm = 0.6;
    p.sigma_max_mm = 1.8;
    p.n_scales = 3;
    const VoxelVolume a = compute_vesselness(v, p);
    const VoxelVolume b = compute_vesselness(shifted, p);
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a.values[size_t(i)]) - b.values[size_t(i)]));
    CHECK(worst < 1e-4);
}

TEST_CASE("reflection equivariance") {
    // asymmetric scene: tube plus a blob off to one side
    VoxelVolume v = gaussian_tube(30, 26, 22, 0.4, 0.9);
    for (int z = 0; z < 22; ++z)
        for (int y = 0; y < 26; ++y)
            for (int x = 0; x < 30; ++x) {
                const double d2 = (x - 7.0) * (x - 7.0) + (y - 6.0) * (y - 6.0) + (z - 5.0) * (z - 5.0);
                v.at(x, y, z) += float(0.8 * std::exp(-d2 / 18.0));
            }
    VoxelVolume mirrored = v;
    for (int z = 0; z < 22; ++z)
        for (int y = 0; y < 26; ++y)
            for (int x = 0; x < 30; ++x) mirrored.at(x, y, z) = v.at(29 - x, y, z);

    FrangiParams p;
    p.sigma_min_mm = 0.6;
    p.sigma_max_mm = 1.2;
    p.n_scales = 2;
    const VoxelVolume a = compute_vesselness(v, p);
    const VoxelVolume b = compute_vesselness(mirrored, p);
    double worst = 0.0;
    for (int z = 0; z < 22; ++z)
        for (int y = 0; y < 26; ++y)
            for (int x = 0; x < 30; ++x)
                worst = std::max(worst, std::abs(double(a.at(x, y, z)) - b.at(29 - x, y, z)));
    CHECK(worst < 1e-10);
}

TEST_CASE("segmentation keeps the largest component") {
    VoxelVolume v = VoxelVolume::zeros({20, 10, 10}, Vec3::Constant(1.0));
    for (int x = 1; x < 8; ++x) v.at(x, 5, 5) = 0.5f;   // 7 voxels
    for (int x = 12; x < 15; ++x) v.at(x, 5, 5) = 0.9f;  // 3 voxels
    const VoxelVolume mask = segment_vesselness(v, 0.05);
    CHECK(mask.at(3, 5, 5) == 1.0f);
    CHECK(mask.at(13, 5, 5) == 0.0f);
}

TEST_CASE("distance transform matches the all-pairs scan") {
    std::mt19937 rng(7);
    VoxelVolume mask = VoxelVolume::zeros({13, 9, 7}, Vec3(0.5, 0.7, 1.1));
    for (auto& x : mask.values) x = (rng() % 3) ? 1.0f : 0.0f;
    mask.values[0] = 0.0f;  // guarantee one background voxel

    const std::vector<float> dist = distance_to_boundary_mm(mask);
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 13; ++x) {
                const std::int64_t i = mask.index(x, y, z);
                if (mask.values[size_t(i)] == 0.0f) {
                    CHECK(dist[size_t(i)] == 0.0f);
                    continue;
                }
                double best = 1e300;
                for (int zz = 0; zz < 7; ++zz)
                    for (int yy = 0; yy < 9; ++yy)
                        for (int xx = 0; xx < 13; ++xx) {
                            if (mask.at(xx, yy, zz) != 0.0f) continue;
                            const Vec3 d((x - xx) * 0.5, (y - yy) * 0.7, (z - zz) * 1.1);
                            best = std::min(best, d.norm());
                        }
                CHECK(std::abs(dist[size_t(i)] - best) < 1e-5);
            }
}

TEST_CASE("hessian eigen ordering and response edge cases") {
    Mat3 h;
    h << -1, 0, 0, 0, -6, 0, 0, 0, -3;
    const HessianEigen e = HessianEigen::from_matrix(h);
    CHECK(e.lambda1 == doctest::Approx(-1));
    CHECK(e.lambda2 == doctest::Approx(-3));
    CHECK(e.lambda3 == doctest::Approx(-6));
    CHECK(e.ra == doctest::Approx(0.5));
    CHECK(e.s == doctest::Approx(std::sqrt(46.0)));

    // bright-vessel sign convention: positive lambda2/lambda3 are rejected
    HessianEigen pos;
    pos.lambda2 = 1.0;
    pos.lambda3 = 2.0;
    pos.s = 1.0;
    CHECK(vesselness_response(pos, 0.5, 0.5, 1.0) == 0.0);
    HessianEigen degenerate;  // lambda3 == 0
    CHECK(vesselness_response(degenerate, 0.5, 0.5, 1.0) == 0.0);
}
