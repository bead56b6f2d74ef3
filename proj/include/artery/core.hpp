#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace artery {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;
using Points3 = Eigen::Matrix3Xd;  // one column per point
using Quat = Eigen::Quaterniond;

// Bad or inconsistent input (CLI exit code 1).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Solver failure: singular system, non-convergence (CLI exit code 2).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Static-partition parallel loop. Each index is processed exactly once by
// exactly one worker, so results are identical for any thread count as long
// as iterations write disjoint outputs.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body,
                         unsigned n_threads = 0) {
    if (n <= 0) return;
    if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
    const std::int64_t grain = 256;
    if (n_threads == 1 || n < 2 * grain) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::int64_t chunk = (n + n_threads - 1) / n_threads;
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&body, lo, hi] {
            for (std::int64_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& w : workers) w.join();
}

// FNV-1a, used for artifact/config fingerprints in pipeline manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace artery
