#pragma once

#include "artery/core.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace artery {

// Scalar 3D image with physical spacing. Values are stored x-fastest:
// index = x + nx*(y + ny*z). Voxel (i,j,k) is centered at
// origin_mm + (i*sx, j*sy, k*sz).
struct VoxelVolume {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    Vec3 origin_mm{0.0, 0.0, 0.0};
    std::vector<float> values;

    std::int64_t size() const {
        return std::int64_t(dims[0]) * dims[1] * dims[2];
    }
    std::int64_t index(int x, int y, int z) const {
        return x + std::int64_t(dims[0]) * (y + std::int64_t(dims[1]) * z);
    }
    std::array<int, 3> coords(std::int64_t idx) const {
        const int x = int(idx % dims[0]);
        const int y = int((idx / dims[0]) % dims[1]);
        const int z = int(idx / (std::int64_t(dims[0]) * dims[1]));
        return {x, y, z};
    }
    bool inside(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
    }
    Vec3 position_mm(int x, int y, int z) const {
        return origin_mm + Vec3(x * spacing_mm.x(), y * spacing_mm.y(), z * spacing_mm.z());
    }
    float& at(int x, int y, int z) { return values[index(x, y, z)]; }
    float at(int x, int y, int z) const { return values[index(x, y, z)]; }

    void validate() const;  // throws InputError on invariant violation

    static VoxelVolume zeros(std::array<int, 3> dims, Vec3 spacing_mm,
                             Vec3 origin_mm = Vec3::Zero());
};

// Multiscale vesselness filter parameters. When c_auto is set, the structure
// threshold c is taken as half the maximum Hessian Frobenius norm at each
// scale and the c field is ignored.
struct FrangiParams {
    double alpha = 0.5;
    double beta = 0.5;
    double c = 0.0;
    bool c_auto = true;
    double sigma_min_mm = 0.5;
    double sigma_max_mm = 2.5;
    int n_scales = 5;

    void validate() const;
};

// Eigenvalues of the scale-normalized Hessian ordered by ascending |lambda|,
// plus the derived tubularity ratios.
struct HessianEigen {
    double lambda1 = 0, lambda2 = 0, lambda3 = 0;
    double ra = 0, rb = 0, s = 0;

    static HessianEigen from_matrix(const Mat3& hessian);
};

// Single-voxel vesselness response at one scale. Returns 0 for the
// bright-vessel convention when lambda2 > 0 or lambda3 > 0, and 0 for
// degenerate (lambda3 == 0) voxels.
double vesselness_response(const HessianEigen& eig, double alpha, double beta, double c);

// Maximum response over n_scales geometrically spaced sigmas in
// [sigma_min_mm, sigma_max_mm], sigma^2-normalized Hessians. Output has the
// same dims/spacing/origin, values in [0,1].
VoxelVolume compute_vesselness(const VoxelVolume& volume, const FrangiParams& params,
                               unsigned n_threads = 0);

// Gaussian-derivative Hessian field at one scale (sigma in mm, per-axis sigma
// in voxels), sigma^2-normalized. Returns the six unique components in the
// order xx, yy, zz, xy, xz, yz. Exposed for the filter and for oracle tests.
std::array<std::vector<double>, 6> hessian_at_scale(const VoxelVolume& volume, double sigma_mm,
                                                    unsigned n_threads = 0);

// Threshold on vesselness followed by largest-6-connected-component
// selection. Returns a binary mask (0/1 values).
VoxelVolume segment_vesselness(const VoxelVolume& vesselness, double threshold = 0.05);

// Exact Euclidean distance (mm) from every nonzero voxel of the mask to the
// nearest zero voxel (boundary distance; respects anisotropic spacing).
// Zero voxels get 0.
std::vector<float> distance_to_boundary_mm(const VoxelVolume& mask);

}  // namespace artery
