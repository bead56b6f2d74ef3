#include "artery/validation.hpp"

#include "artery/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace artery {

namespace {

// Exact nearest-neighbor kd-tree over points. Distances are minima of the
// same squared norms a brute-force scan would compute, so results agree
// bit for bit.
class KdTree {
public:
    explicit KdTree(const Points3& pts) : pts_(pts) {
        index_.resize(size_t(pts.cols()));
        std::iota(index_.begin(), index_.end(), 0);
        nodes_.reserve(index_.size() * 2);
        root_ = build(0, int(index_.size()), 0);
    }

    double nearest_sq(const Vec3& q) const {
        double best = std::numeric_limits<double>::infinity();
        search(root_, q, best);
        return best;
    }

private:
    struct Node {
        int lo, hi;          // leaf range in index_
        int left = -1, right = -1;
        int axis = 0;
        double split = 0.0;
    };

    int build(int lo, int hi, int depth) {
        Node node;
        node.lo = lo;
        node.hi = hi;
        const int id = int(nodes_.size());
        nodes_.push_back(node);
        if (hi - lo <= 8) return id;
        const int axis = depth % 3;
        const int mid = (lo + hi) / 2;
        std::nth_element(index_.begin() + lo, index_.begin() + mid, index_.begin() + hi,
                         [&](int a, int b) { return pts_(axis, a) < pts_(axis, b); });
        nodes_[size_t(id)].axis = axis;
        nodes_[size_t(id)].split = pts_(axis, index_[size_t(mid)]);
        nodes_[size_t(id)].left = build(lo, mid, depth + 1);
        nodes_[size_t(id)].right = build(mid, hi, depth + 1);
        return id;
    }

    void search(int id, const Vec3& q, double& best) const {
        const Node& node = nodes_[size_t(id)];
        if (node.left < 0) {
            for (int k = node.lo; k < node.hi; ++k)
                best = std::min(best, (pts_.col(index_[size_t(k)]) - q).squaredNorm());
            return;
        }
        const double d = q[node.axis] - node.split;
        const int near = d < 0 ? node.left : node.right;
        const int far = d < 0 ? node.right : node.left;
        search(near, q, best);
        if (d * d < best) search(far, q, best);
    }

    const Points3& pts_;
    std::vector<int> index_;
    std::vector<Node> nodes_;
    int root_ = 0;
};

double directed_hausdorff(const SurfaceMesh& a, const KdTree& tree_b) {
    double worst = 0.0;
    for (int v = 0; v < a.vertex_count(); ++v)
        worst = std::max(worst, tree_b.nearest_sq(a.vertex(v)));
    return std::sqrt(worst);
}

}  // namespace

double hausdorff_distance(const SurfaceMesh& a, const SurfaceMesh& b) {
    if (a.vertex_count() == 0 || b.vertex_count() == 0) throw InputError("empty mesh");
    const KdTree ta(a.vertices), tb(b.vertices);
    return std::max(directed_hausdorff(a, tb), directed_hausdorff(b, ta));
}

double mean_surface_distance(const SurfaceMesh& a, const SurfaceMesh& b) {
    if (a.vertex_count() == 0) throw InputError("empty mesh");
    if (b.vertex_count() == 0) throw InputError("empty reference mesh");
    const KdTree tb(b.vertices);
    double sum = 0.0;
    for (int v = 0; v < a.vertex_count(); ++v) sum += std::sqrt(tb.nearest_sq(a.vertex(v)));
    return sum / a.vertex_count();
}

namespace {

std::vector<Vec3> resample_branch(const VesselTree& tree, const Branch& branch, int samples) {
    std::vector<Vec3> pts;
    std::vector<double> arcs;
    for (int pid : branch.point_ids) {
        pts.push_back(tree.point(pid).pos_mm);
        arcs.push_back(tree.point(pid).arc_length_mm);
    }
    const double total = arcs.back();
    std::vector<Vec3> out;
    out.reserve(size_t(samples));
    std::size_t seg = 0;
    for (int k = 0; k < samples; ++k) {
        const double s = total * k / (samples - 1);
        while (seg + 2 < arcs.size() && arcs[seg + 1] < s) ++seg;
        const double span = arcs[seg + 1] - arcs[seg];
        const double t = span > 0 ? (s - arcs[seg]) / span : 0.0;
        out.push_back((1.0 - t) * pts[seg] + t * pts[seg + 1]);
    }
    return out;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

double curve_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    const auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        double sum = 0.0;
        for (const Vec3& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i + 1 < to.size(); ++i)
                best = std::min(best, point_segment_distance(p, to[i], to[i + 1]));
            sum += best;
        }
        return sum / double(from.size());
    };
    return 0.5 * (directed(a, b) + directed(b, a));
}

}  // namespace

std::pair<double, double> branch_metrics(const VesselTree& interp, const VesselTree& reference) {
    if (reference.branches.empty()) throw InputError("reference tree has no branches");
    if (interp.branches.empty()) throw InputError("interpolated tree has no branches");

    const int ni = int(interp.branches.size());
    const int nr = int(reference.branches.size());
    const double bcr = double(ni) / double(nr);

    constexpr int kSamples = 64;
    constexpr double kGateMm = 5.0;
    std::vector<std::vector<Vec3>> ci(static_cast<size_t>(ni)), cr(static_cast<size_t>(nr));
    for (int i = 0; i < ni; ++i) ci[size_t(i)] = resample_branch(interp, interp.branches[size_t(i)], kSamples);
    for (int r = 0; r < nr; ++r) cr[size_t(r)] = resample_branch(reference, reference.branches[size_t(r)], kSamples);

    struct Pair {
        double d;
        int i, r;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < ni; ++i)
        for (int r = 0; r < nr; ++r) {
            const double d = curve_distance(ci[size_t(i)], cr[size_t(r)]);
            if (d <= kGateMm) pairs.push_back({d, i, r});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.d != b.d) return a.d < b.d;
        return a.i != b.i ? a.i < b.i : a.r < b.r;
    });

    std::vector<int> match_of(size_t(ni), -1);
    std::vector<char> ref_used(size_t(nr), 0);
    for (const auto& p : pairs) {
        if (match_of[size_t(p.i)] >= 0 || ref_used[size_t(p.r)]) continue;
        match_of[size_t(p.i)] = p.r;
        ref_used[size_t(p.r)] = 1;
    }

    double bcs = 0.0;
    int matched = 0;
    for (int i = 0; i < ni; ++i) {
        if (match_of[size_t(i)] < 0) continue;
        const double li = interp.branch_length_mm(interp.branches[size_t(i)].id);
        const double lr = reference.branch_length_mm(reference.branches[size_t(match_of[size_t(i)])].id);
        bcs += lr > 0 ? std::min(li / lr, 1.0) : 1.0;
        ++matched;
    }
    bcs = matched > 0 ? bcs / matched : 0.0;
    return {bcr, std::clamp(bcs, 0.0, 1.0)};
}

namespace {

// Ray-parity voxelization per connected component, so unions of closed
// shells classify correctly.
VoxelVolume voxelize_surface(const SurfaceMesh& mesh, double voxel_mm) {
    // connected components over shared vertices
    std::vector<int> comp(size_t(mesh.vertex_count()), -1);
    {
        std::vector<std::vector<int>> adj(size_t(mesh.vertex_count()));
        for (const auto& t : mesh.triangles)
            for (int e = 0; e < 3; ++e) {
                adj[size_t(t[size_t(e)])].push_back(t[size_t((e + 1) % 3)]);
                adj[size_t(t[size_t((e + 1) % 3)])].push_back(t[size_t(e)]);
            }
        int nc = 0;
        for (int v = 0; v < mesh.vertex_count(); ++v) {
            if (comp[size_t(v)] >= 0 || adj[size_t(v)].empty()) continue;
            std::vector<int> stack{v};
            comp[size_t(v)] = nc;
            while (!stack.empty()) {
                const int u = stack.back();
                stack.pop_back();
                for (int w : adj[size_t(u)])
                    if (comp[size_t(w)] < 0) {
                        comp[size_t(w)] = nc;
                        stack.push_back(w);
                    }
            }
            ++nc;
        }
    }

    const Vec3 lo = mesh.vertices.rowwise().minCoeff();
    const Vec3 hi = mesh.vertices.rowwise().maxCoeff();
    const Vec3 margin = Vec3::Constant(2.0 * voxel_mm);
    const Vec3 origin = lo - margin;
    const Vec3 extent = hi - lo + 2.0 * margin;
    std::array<int, 3> dims;
    for (int a = 0; a < 3; ++a) dims[size_t(a)] = std::max(4, int(std::ceil(extent[a] / voxel_mm)) + 1);

    VoxelVolume vol = VoxelVolume::zeros(dims, Vec3::Constant(voxel_mm), origin);

    // cast rays along +x per (y, z) voxel row; collect crossings per component
    struct Crossing {
        double x;
        int comp;
    };
    parallel_for(std::int64_t(dims[1]) * dims[2], [&](std::int64_t row) {
        const int y = int(row % dims[1]);
        const int z = int(row / dims[1]);
        // tiny irrational offsets keep rays off vertices and edges
        const double py = origin.y() + y * voxel_mm + voxel_mm * 1.9371e-6;
        const double pz = origin.z() + z * voxel_mm + voxel_mm * 3.1447e-6;
        std::vector<Crossing> crossings;
        for (const auto& t : mesh.triangles) {
            const Vec3 a = mesh.vertex(t[0]), b = mesh.vertex(t[1]), c = mesh.vertex(t[2]);
            // 2D point-in-triangle in (y, z), then solve for x on the plane
            const double d1 = (b.y() - a.y()) * (pz - a.z()) - (b.z() - a.z()) * (py - a.y());
            const double d2 = (c.y() - b.y()) * (pz - b.z()) - (c.z() - b.z()) * (py - b.y());
            const double d3 = (a.y() - c.y()) * (pz - c.z()) - (a.z() - c.z()) * (py - c.y());
            const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
            const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
            if (neg && pos) continue;
            const Vec3 n = (b - a).cross(c - a);
            if (std::abs(n.x()) < 1e-15) continue;  // ray parallel to the plane
            const double x = a.x() - ((py - a.y()) * n.y() + (pz - a.z()) * n.z()) / n.x();
            crossings.push_back({x, comp[size_t(t[0])]});
        }
        std::sort(crossings.begin(), crossings.end(),
                  [](const Crossing& u, const Crossing& v) { return u.x < v.x; });
        for (int x = 0; x < dims[0]; ++x) {
            const double px = origin.x() + x * voxel_mm;
            // inside if parity is odd for any component
            std::array<int, 64> parity{};
            bool inside = false;
            for (const auto& cr : crossings) {
                if (cr.x >= px) break;
                if (cr.comp < 64) parity[size_t(cr.comp)] ^= 1;
            }
            for (int k = 0; k < 64 && !inside; ++k) inside = parity[size_t(k)] != 0;
            if (inside) vol.at(x, y, z) = 1.0f;
        }
    });
    return vol;
}

}  // namespace

VesselTree extract_tree_from_mesh(const SurfaceMesh& mesh, double voxel_mm) {
    if (mesh.vertex_count() == 0 || mesh.triangles.empty()) throw InputError("empty mesh");
    return extract_centerline_auto(voxelize_surface(mesh, voxel_mm));
}

ValidationSummary summarize(std::vector<MetricsRow> rows) {
    if (rows.empty()) throw InputError("no metric rows");
    ValidationSummary s;
    s.rows = std::move(rows);
    s.mean = MetricsRow{0, 0, 0, 0, 0};
    s.stddev = MetricsRow{0, 0, 0, 0, 0};
    const double n = double(s.rows.size());
    for (const auto& r : s.rows) {
        s.mean.hd_mm += r.hd_mm;
        s.mean.msd_mm += r.msd_mm;
        s.mean.bcr += r.bcr;
        s.mean.bcs += r.bcs;
    }
    s.mean.hd_mm /= n;
    s.mean.msd_mm /= n;
    s.mean.bcr /= n;
    s.mean.bcs /= n;
    for (const auto& r : s.rows) {
        s.stddev.hd_mm += (r.hd_mm - s.mean.hd_mm) * (r.hd_mm - s.mean.hd_mm);
        s.stddev.msd_mm += (r.msd_mm - s.mean.msd_mm) * (r.msd_mm - s.mean.msd_mm);
        s.stddev.bcr += (r.bcr - s.mean.bcr) * (r.bcr - s.mean.bcr);
        s.stddev.bcs += (r.bcs - s.mean.bcs) * (r.bcs - s.mean.bcs);
    }
    s.stddev.hd_mm = std::sqrt(s.stddev.hd_mm / n);  // population
    s.stddev.msd_mm = std::sqrt(s.stddev.msd_mm / n);
    s.stddev.bcr = std::sqrt(s.stddev.bcr / n);
    s.stddev.bcs = std::sqrt(s.stddev.bcs / n);
    return s;
}

ValidationSummary validate_sequence(const std::vector<SurfaceMesh>& interp,
                                    const std::vector<SurfaceMesh>& reference,
                                    const std::vector<int>& phases, double tree_voxel_mm,
                                    unsigned n_threads) {
    if (interp.size() != reference.size() || interp.size() != phases.size())
        throw InputError("phase sets do not match");
    if (interp.empty()) throw InputError("no phases to validate");

    std::vector<MetricsRow> rows(interp.size());
    parallel_for(std::int64_t(interp.size()), [&](std::int64_t k) {
        MetricsRow row;
        row.phase = phases[size_t(k)];
        row.hd_mm = hausdorff_distance(interp[size_t(k)], reference[size_t(k)]);
        row.msd_mm = mean_surface_distance(interp[size_t(k)], reference[size_t(k)]);
        const VesselTree ti = extract_tree_from_mesh(interp[size_t(k)], tree_voxel_mm);
        const VesselTree tr = extract_tree_from_mesh(reference[size_t(k)], tree_voxel_mm);
        const auto [bcr, bcs] = branch_metrics(ti, tr);
        row.bcr = bcr;
        row.bcs = bcs;
        rows[size_t(k)] = row;
    }, n_threads);

    std::sort(rows.begin(), rows.end(),
              [](const MetricsRow& a, const MetricsRow& b) { return a.phase < b.phase; });
    return summarize(std::move(rows));
}

std::string metrics_csv(const ValidationSummary& summary) {
    std::string out = "Phase,HD_mm,MSD_mm,BCR,BCS\n";
    char buf[160];
    const auto append = [&](const char* label, const MetricsRow& r) {
        std::snprintf(buf, sizeof buf, "%s,%.6g,%.6g,%.6g,%.6g\n", label, r.hd_mm, r.msd_mm, r.bcr,
                      r.bcs);
        out += buf;
    };
    for (const auto& r : summary.rows) {
        char label[24];
        std::snprintf(label, sizeof label, "%02d", r.phase);
        append(label, r);
    }
    append("Mean", summary.mean);
    append("STD", summary.stddev);
    return out;
}

}  // namespace artery
