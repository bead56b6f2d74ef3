#include "artery/volume.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace artery {

void VoxelVolume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[size_t(a)] < 2) throw InputError("volume dims must be >= 2 per axis");
        if (!(spacing_mm[a] > 0.0)) throw InputError("volume spacing must be positive");
    }
    if (std::int64_t(values.size()) != size())
        throw InputError("volume value count does not match dims product");
}

VoxelVolume VoxelVolume::zeros(std::array<int, 3> dims, Vec3 spacing_mm, Vec3 origin_mm) {
    VoxelVolume v;
    v.dims = dims;
    v.spacing_mm = spacing_mm;
    v.origin_mm = origin_mm;
    v.values.assign(size_t(std::int64_t(dims[0]) * dims[1] * dims[2]), 0.0f);
    return v;
}

void FrangiParams::validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw InputError("frangi alpha/beta must be positive");
    if (!c_auto && !(c > 0.0)) throw InputError("frangi c must be positive unless c_auto is set");
    if (!(sigma_min_mm > 0.0) || !(sigma_max_mm > 0.0))
        throw InputError("frangi sigma range must be positive");
    if (sigma_min_mm > sigma_max_mm) throw InputError("frangi sigma_min_mm > sigma_max_mm");
    if (n_scales < 1) throw InputError("frangi n_scales must be >= 1");
}

HessianEigen HessianEigen::from_matrix(const Mat3& hessian) {
    Eigen::SelfAdjointEigenSolver<Mat3> es;
    es.computeDirect(hessian, Eigen::EigenvaluesOnly);
    Vec3 ev = es.eigenvalues();
    // ascending |lambda|
    std::array<double, 3> l{ev[0], ev[1], ev[2]};
    std::sort(l.begin(), l.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    HessianEigen out;
    out.lambda1 = l[0];
    out.lambda2 = l[1];
    out.lambda3 = l[2];
    out.s = std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
    if (l[2] != 0.0) out.ra = std::abs(l[1] / l[2]);
    const double prod = std::abs(l[1] * l[2]);
    if (prod > 0.0) out.rb = std::abs(l[0]) / std::sqrt(prod);
    return out;
}

double vesselness_response(const HessianEigen& eig, double alpha, double beta, double c) {
    if (eig.lambda2 > 0.0 || eig.lambda3 > 0.0) return 0.0;
    // degenerate, non-tubular
    if (eig.lambda3 == 0.0 || eig.lambda2 * eig.lambda3 == 0.0) return 0.0;
    const double ta = 1.0 - std::exp(-(eig.ra * eig.ra) / (2.0 * alpha * alpha));
    const double tb = std::exp(-(eig.rb * eig.rb) / (2.0 * beta * beta));
    const double tc = 1.0 - std::exp(-(eig.s * eig.s) / (2.0 * c * c));
    return ta * tb * tc;
}

namespace {

struct Kernel {
    std::vector<double> taps;  // taps[k] = K(k), k = 0..radius
    int radius = 0;
    int order = 0;  // derivative order; even taps for order 0/2, odd for order 1
};

// Sampled Gaussian and its derivatives in voxel units. The order-0 kernel is
// normalized to unit sum; the same factor is applied to the derivatives so
// the three kernels stay mutually consistent.
Kernel gaussian_kernel(double sigma_vox, int order) {
    Kernel k;
    k.order = order;
    k.radius = std::max(1, int(std::ceil(3.5 * sigma_vox)));
    const double s2 = sigma_vox * sigma_vox;
    double norm = 0.0;
    for (int i = -k.radius; i <= k.radius; ++i)
        norm += std::exp(-0.5 * i * i / s2);
    k.taps.resize(size_t(k.radius) + 1);
    for (int i = 0; i <= k.radius; ++i) {
        const double g = std::exp(-0.5 * i * i / s2) / norm;
        if (order == 0) k.taps[size_t(i)] = g;
        else if (order == 1) k.taps[size_t(i)] = -double(i) / s2 * g;
        else k.taps[size_t(i)] = (double(i) * i / s2 - 1.0) / s2 * g;
    }
    return k;
}

// Convolution along one axis with clamped borders. Even kernels accumulate
// symmetric pairs (f[x-k]+f[x+k]) and odd kernels antisymmetric pairs, which
// makes the result exactly reflection-equivariant in floating point.
void convolve_axis(const std::array<int, 3>& dims, const std::vector<double>& in,
                   std::vector<double>& out, int axis, const Kernel& kernel,
                   unsigned n_threads) {
    const int n = dims[size_t(axis)];
    const std::int64_t stride = axis == 0 ? 1
                              : axis == 1 ? std::int64_t(dims[0])
                                          : std::int64_t(dims[0]) * dims[1];
    const int nu = axis == 0 ? dims[1] : dims[0];
    const int nv = axis == 2 ? dims[1] : dims[2];
    const bool odd = kernel.order == 1;

    parallel_for(std::int64_t(nu) * nv, [&](std::int64_t line) {
        const int u = int(line % nu);
        const int v = int(line / nu);
        std::int64_t base;
        if (axis == 0) base = std::int64_t(dims[0]) * (u + std::int64_t(dims[1]) * v);
        else if (axis == 1) base = u + std::int64_t(dims[0]) * dims[1] * v;
        else base = u + std::int64_t(dims[0]) * v;

        std::vector<double> buf(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) buf[size_t(i)] = in[size_t(base + i * stride)];

        for (int i = 0; i < n; ++i) {
            double acc = odd ? 0.0 : kernel.taps[0] * buf[size_t(i)];
            for (int k = 1; k <= kernel.radius; ++k) {
                const double lo = buf[size_t(std::max(0, i - k))];
                const double hi = buf[size_t(std::min(n - 1, i + k))];
                acc += kernel.taps[size_t(k)] * (odd ? hi - lo : hi + lo);
            }
            out[size_t(base + i * stride)] = acc;
        }
    }, n_threads);
}

}  // namespace

std::array<std::vector<double>, 6> hessian_at_scale(const VoxelVolume& volume, double sigma_mm,
                                                    unsigned n_threads) {
    const auto& dims = volume.dims;
    const std::size_t n = volume.values.size();
    std::array<Kernel, 3> k0, k1, k2;
    for (int a = 0; a < 3; ++a) {
        const double sv = sigma_mm / volume.spacing_mm[a];
        k0[size_t(a)] = gaussian_kernel(sv, 0);
        k1[size_t(a)] = gaussian_kernel(sv, 1);
        k2[size_t(a)] = gaussian_kernel(sv, 2);
    }

    // DC removal: the Hessian of a constant vanishes, and subtracting the
    // mean keeps small second derivatives from drowning in a large baseline
    double mean = 0.0;
    for (float v : volume.values) mean += v;
    mean /= double(n);
    std::vector<double> centered(n);
    parallel_for(std::int64_t(n), [&](std::int64_t i) {
        centered[size_t(i)] = double(volume.values[size_t(i)]) - mean;
    }, n_threads);

    std::vector<double> x0(n), x1(n), x2(n);
    convolve_axis(dims, centered, x0, 0, k0[0], n_threads);
    convolve_axis(dims, centered, x1, 0, k1[0], n_threads);
    convolve_axis(dims, centered, x2, 0, k2[0], n_threads);
    centered.clear();
    centered.shrink_to_fit();

    std::vector<double> x0y0(n), x0y1(n), x0y2(n), x1y0(n), x1y1(n), x2y0(n);
    convolve_axis(dims, x0, x0y0, 1, k0[1], n_threads);
    convolve_axis(dims, x0, x0y1, 1, k1[1], n_threads);
    convolve_axis(dims, x0, x0y2, 1, k2[1], n_threads);
    convolve_axis(dims, x1, x1y0, 1, k0[1], n_threads);
    convolve_axis(dims, x1, x1y1, 1, k1[1], n_threads);
    convolve_axis(dims, x2, x2y0, 1, k0[1], n_threads);
    x0.clear(); x1.clear(); x2.clear();

    std::array<std::vector<double>, 6> h;  // xx, yy, zz, xy, xz, yz
    for (auto& f : h) f.resize(n);
    convolve_axis(dims, x2y0, h[0], 2, k0[2], n_threads);
    convolve_axis(dims, x0y2, h[1], 2, k0[2], n_threads);
    convolve_axis(dims, x0y0, h[2], 2, k2[2], n_threads);
    convolve_axis(dims, x1y1, h[3], 2, k0[2], n_threads);
    convolve_axis(dims, x1y0, h[4], 2, k1[2], n_threads);
    convolve_axis(dims, x0y1, h[5], 2, k1[2], n_threads);

    // derivative units (1/mm per order) and sigma^2 scale normalization
    const double sx = volume.spacing_mm.x(), sy = volume.spacing_mm.y(), sz = volume.spacing_mm.z();
    const double s2 = sigma_mm * sigma_mm;
    const std::array<double, 6> unit = {
        s2 / (sx * sx), s2 / (sy * sy), s2 / (sz * sz),
        s2 / (sx * sy), s2 / (sx * sz), s2 / (sy * sz)};
    for (int c = 0; c < 6; ++c) {
        auto& f = h[size_t(c)];
        const double u = unit[size_t(c)];
        parallel_for(std::int64_t(n), [&f, u](std::int64_t i) { f[size_t(i)] *= u; }, n_threads);
    }
    return h;
}

VoxelVolume compute_vesselness(const VoxelVolume& volume, const FrangiParams& params,
                               unsigned n_threads) {
    volume.validate();
    params.validate();

    const std::int64_t n = volume.size();
    VoxelVolume out = VoxelVolume::zeros(volume.dims, volume.spacing_mm, volume.origin_mm);

    std::vector<double> sigmas(static_cast<size_t>(params.n_scales));
    if (params.n_scales == 1) {
        sigmas[0] = params.sigma_min_mm;
    } else {
        const double ratio = params.sigma_max_mm / params.sigma_min_mm;
        for (int i = 0; i < params.n_scales; ++i)
            sigmas[size_t(i)] = params.sigma_min_mm * std::pow(ratio, double(i) / (params.n_scales - 1));
    }

    // two passes: the structure threshold c (when automatic) is half the
    // maximum Frobenius norm over the whole scale space, so weak coarse
    // scales are not re-amplified
    std::vector<std::vector<float>> partials(sigmas.size()), snorms(sigmas.size());
    float smax = 0.0f;
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        const auto h = hessian_at_scale(volume, sigmas[k], n_threads);
        auto& partial = partials[k];
        auto& snorm = snorms[k];
        partial.resize(static_cast<size_t>(n));
        snorm.resize(static_cast<size_t>(n));

        parallel_for(n, [&](std::int64_t i) {
            Mat3 m;
            m << h[0][size_t(i)], h[3][size_t(i)], h[4][size_t(i)],
                 h[3][size_t(i)], h[1][size_t(i)], h[5][size_t(i)],
                 h[4][size_t(i)], h[5][size_t(i)], h[2][size_t(i)];
            const HessianEigen eig = HessianEigen::from_matrix(m);
            snorm[size_t(i)] = float(eig.s);
            if (eig.lambda2 > 0.0 || eig.lambda3 > 0.0 || eig.lambda3 == 0.0 ||
                eig.lambda2 * eig.lambda3 == 0.0) {
                partial[size_t(i)] = 0.0f;
            } else {
                const double ta = 1.0 - std::exp(-(eig.ra * eig.ra) / (2.0 * params.alpha * params.alpha));
                const double tb = std::exp(-(eig.rb * eig.rb) / (2.0 * params.beta * params.beta));
                partial[size_t(i)] = float(ta * tb);
            }
        }, n_threads);
        for (std::int64_t i = 0; i < n; ++i) smax = std::max(smax, snorm[size_t(i)]);
    }

    double c = params.c;
    if (params.c_auto) {
        c = 0.5 * double(smax);
        if (c <= 0.0) return out;  // flat volume
    }

    const double inv2c2 = 1.0 / (2.0 * c * c);
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        const auto& partial = partials[k];
        const auto& snorm = snorms[k];
        parallel_for(n, [&](std::int64_t i) {
            const double s = snorm[size_t(i)];
            const double v0 = partial[size_t(i)] * (1.0 - std::exp(-s * s * inv2c2));
            if (v0 > out.values[size_t(i)]) out.values[size_t(i)] = float(v0);
        }, n_threads);
    }
    return out;
}

VoxelVolume segment_vesselness(const VoxelVolume& vesselness, double threshold) {
    vesselness.validate();
    VoxelVolume mask = VoxelVolume::zeros(vesselness.dims, vesselness.spacing_mm, vesselness.origin_mm);

    const std::int64_t n = vesselness.size();
    std::vector<int> label(size_t(n), -1);
    int n_labels = 0;
    std::vector<std::int64_t> comp_size;

    std::deque<std::int64_t> queue;
    for (std::int64_t start = 0; start < n; ++start) {
        if (label[size_t(start)] >= 0 || !(vesselness.values[size_t(start)] > threshold)) continue;
        const int id = n_labels++;
        comp_size.push_back(0);
        label[size_t(start)] = id;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::int64_t cur = queue.front();
            queue.pop_front();
            ++comp_size[size_t(id)];
            const auto [x, y, z] = vesselness.coords(cur);
            const std::array<std::array<int, 3>, 6> nbrs = {{{x - 1, y, z}, {x + 1, y, z},
                                                             {x, y - 1, z}, {x, y + 1, z},
                                                             {x, y, z - 1}, {x, y, z + 1}}};
            for (const auto& nb : nbrs) {
                if (!vesselness.inside(nb[0], nb[1], nb[2])) continue;
                const std::int64_t ni = vesselness.index(nb[0], nb[1], nb[2]);
                if (label[size_t(ni)] >= 0 || !(vesselness.values[size_t(ni)] > threshold)) continue;
                label[size_t(ni)] = id;
                queue.push_back(ni);
            }
        }
    }
    if (n_labels == 0) return mask;
    const int best = int(std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());
    for (std::int64_t i = 0; i < n; ++i)
        if (label[size_t(i)] == best) mask.values[size_t(i)] = 1.0f;
    return mask;
}

namespace {

// 1D squared-distance transform (lower envelope of parabolas), physical
// coordinate step h. f holds squared distances on input and output; +inf
// entries are sources that never contribute.
void edt_1d(std::vector<double>& f, double h, std::vector<double>& scratch,
            std::vector<int>& vi, std::vector<double>& zi) {
    const int n = int(f.size());
    const double inf = std::numeric_limits<double>::infinity();
    vi.assign(size_t(n), 0);
    zi.assign(size_t(n) + 1, 0.0);
    scratch.resize(size_t(n));
    int k = 0;
    vi[0] = 0;
    zi[0] = -inf;
    zi[1] = inf;
    const double h2 = h * h;
    for (int q = 1; q < n; ++q) {
        const double fq = f[size_t(q)];
        if (fq == inf) continue;
        while (true) {
            const int v = vi[size_t(k)];
            const double fv = f[size_t(v)];
            const double s = fv == inf
                                 ? -inf
                                 : ((fq + double(q) * q * h2) - (fv + double(v) * v * h2)) /
                                       (2.0 * h2 * (q - v));
            if (s <= zi[size_t(k)]) {
                --k;
                if (k < 0) {
                    k = 0;
                    vi[0] = q;
                    zi[0] = -inf;
                    zi[1] = inf;
                    break;
                }
                continue;
            }
            ++k;
            vi[size_t(k)] = q;
            zi[size_t(k)] = s;
            zi[size_t(k) + 1] = inf;
            break;
        }
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (zi[size_t(k) + 1] < double(q)) ++k;
        const int v = vi[size_t(k)];
        const double dq = double(q - v) * h;
        scratch[size_t(q)] = f[size_t(v)] == inf ? inf : dq * dq + f[size_t(v)];
    }
    f = scratch;
}

}  // namespace

std::vector<float> distance_to_boundary_mm(const VoxelVolume& mask) {
    mask.validate();
    const std::int64_t n = mask.size();
    const auto& dims = mask.dims;
    std::vector<double> sq(static_cast<size_t>(n));
    const double inf = std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < n; ++i) sq[size_t(i)] = mask.values[size_t(i)] != 0.0f ? inf : 0.0;

    for (int axis = 0; axis < 3; ++axis) {
        const int len = dims[size_t(axis)];
        const std::int64_t stride = axis == 0 ? 1
                                  : axis == 1 ? std::int64_t(dims[0])
                                              : std::int64_t(dims[0]) * dims[1];
        const int nu = axis == 0 ? dims[1] : dims[0];
        const int nv = axis == 2 ? dims[1] : dims[2];
        const double h = mask.spacing_mm[axis];
        parallel_for(std::int64_t(nu) * nv, [&](std::int64_t line) {
            const int u = int(line % nu);
            const int v = int(line / nu);
            std::int64_t base;
            if (axis == 0) base = std::int64_t(dims[0]) * (u + std::int64_t(dims[1]) * v);
            else if (axis == 1) base = u + std::int64_t(dims[0]) * dims[1] * v;
            else base = u + std::int64_t(dims[0]) * v;
            std::vector<double> f(static_cast<size_t>(len));
            for (int i = 0; i < len; ++i) f[size_t(i)] = sq[size_t(base + i * stride)];
            std::vector<double> scratch;
            std::vector<int> vi;
            std::vector<double> zi;
            edt_1d(f, h, scratch, vi, zi);
            for (int i = 0; i < len; ++i) sq[size_t(base + i * stride)] = f[size_t(i)];
        });
    }

    std::vector<float> out(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        out[size_t(i)] = std::isfinite(sq[size_t(i)]) ? float(std::sqrt(sq[size_t(i)])) : 0.0f;
    return out;
}

}  // namespace artery
