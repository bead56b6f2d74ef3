#include "artery/skinning.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>

namespace artery {

void HandleSet::validate(const TetMesh& mesh) const {
    if (handles.empty()) throw InputError("handle set is empty");
    std::set<int> seen;
    for (const auto& h : handles) {
        if (h.centerline_nodes.empty()) throw InputError("empty handle");
        for (int n : h.centerline_nodes) {
            if (n < 0 || n >= mesh.node_count()) throw InputError("handle node outside mesh");
            if (!seen.insert(n).second) throw InputError("handle node sets are not disjoint");
        }
    }
    for (int n : mesh.centerline_node_ids)
        if (!seen.count(n)) throw InputError("centerline node not covered by any handle");
}

HandleSet build_handles(const TetMesh& mesh, double subdivision_mm) {
    if (!(subdivision_mm > 0)) throw InputError("subdivision_mm must be positive");

    std::map<int, std::vector<int>> per_branch;
    for (int n : mesh.centerline_node_ids) per_branch[mesh.node_branch[size_t(n)]].push_back(n);

    HandleSet set;
    for (auto& [branch, nodes] : per_branch) {
        std::sort(nodes.begin(), nodes.end(), [&](int a, int b) {
            return mesh.node_arc_mm[size_t(a)] < mesh.node_arc_mm[size_t(b)];
        });
        const double lo = mesh.node_arc_mm[size_t(nodes.front())];
        const double hi = mesh.node_arc_mm[size_t(nodes.back())];
        const double len = std::max(1e-9, hi - lo);
        const int n_seg = std::max(1, int(std::round(len / subdivision_mm)));
        const double seg_len = len / n_seg;

        std::vector<Handle> segs(static_cast<size_t>(n_seg));
        for (int n : nodes) {
            const double a = mesh.node_arc_mm[size_t(n)] - lo;
            const int k = std::min(n_seg - 1, int(a / seg_len));
            segs[size_t(k)].centerline_nodes.push_back(n);
        }
        for (int k = 0; k < n_seg; ++k) {
            if (segs[size_t(k)].centerline_nodes.empty()) continue;
            segs[size_t(k)].branch_id = branch;
            segs[size_t(k)].arc_begin_mm = lo + k * seg_len;
            segs[size_t(k)].arc_end_mm = lo + (k + 1) * seg_len;
            set.handles.push_back(std::move(segs[size_t(k)]));
        }
    }
    set.validate(mesh);
    return set;
}

ConstraintSet dirichlet_constraints(const TetMesh& mesh, const HandleSet& handles) {
    handles.validate(mesh);
    ConstraintSet cs;
    for (int b = 0; b < handles.count(); ++b)
        for (int n : handles.handles[size_t(b)].centerline_nodes) {
            cs.node_ids.push_back(n);
            cs.unit_handle.push_back(b);
        }
    return cs;
}

Eigen::SparseMatrix<double> stiffness_matrix(const TetMesh& mesh) {
    const int n = mesh.node_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(mesh.tets.size() * 16);
    for (const auto& t : mesh.tets) {
        const Vec3 x0 = mesh.nodes.col(t[0]);
        Mat3 d;
        d.col(0) = mesh.nodes.col(t[1]) - x0;
        d.col(1) = mesh.nodes.col(t[2]) - x0;
        d.col(2) = mesh.nodes.col(t[3]) - x0;
        const double vol = d.determinant() / 6.0;
        if (!(vol > 0)) throw NumericalError("non-positive tet volume in stiffness assembly");
        const Mat3 dinv = d.inverse();
        Eigen::Matrix<double, 4, 3> grads;
        grads.row(1) = dinv.row(0);
        grads.row(2) = dinv.row(1);
        grads.row(3) = dinv.row(2);
        grads.row(0) = -(grads.row(1) + grads.row(2) + grads.row(3));
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                trips.emplace_back(t[size_t(i)], t[size_t(j)],
                                   vol * grads.row(i).dot(grads.row(j)));
    }
    Eigen::SparseMatrix<double> k(n, n);
    k.setFromTriplets(trips.begin(), trips.end());
    return k;
}

Eigen::VectorXd lumped_mass(const TetMesh& mesh) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.node_count());
    for (int t = 0; t < int(mesh.tets.size()); ++t) {
        const double q = mesh.tet_volume(t) / 4.0;
        for (int i = 0; i < 4; ++i) m[mesh.tets[size_t(t)][size_t(i)]] += q;
    }
    return m;
}

Eigen::SparseMatrix<double> bilaplacian(const TetMesh& mesh) {
    const Eigen::SparseMatrix<double> k = stiffness_matrix(mesh);
    Eigen::VectorXd m = lumped_mass(mesh);
    for (int i = 0; i < m.size(); ++i)
        if (!(m[i] > 0)) throw NumericalError("node with zero lumped mass");
    return k * m.cwiseInverse().asDiagonal() * k;
}

namespace {

// Per-handle bounded solve. The system keeps the bi-Laplacian pattern across
// iterations: fixed rows/columns are zeroed with a unit diagonal so the
// symbolic factorization is computed once.
class BoundedSolver {
public:
    BoundedSolver(const Eigen::SparseMatrix<double>& q, double kkt_tol, int max_iters)
        : q_(q), kkt_tol_(kkt_tol), max_iters_(max_iters) {
        pattern_ = q_;
        solver_.analyzePattern(pattern_);
    }

    // fixed_value: NaN for free nodes, else the Dirichlet value.
    Eigen::VectorXd solve(const Eigen::VectorXd& dirichlet) {
        const int n = int(q_.rows());
        std::vector<char> fixed(size_t(n), 0);
        Eigen::VectorXd value = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i)
            if (std::isfinite(dirichlet[i])) {
                fixed[size_t(i)] = 1;  // permanent equality constraint
                value[i] = dirichlet[i];
            }
        std::vector<char> active(size_t(n), 0);  // at-bound box constraints

        Eigen::VectorXd w = value;
        const double dual_scale = q_.diagonal().cwiseAbs().mean();
        const double bound_tol = std::min(1e-10, kkt_tol_);

        for (int iter = 0; iter < max_iters_; ++iter) {
            rebuild(fixed, active, value);
            solver_.factorize(pattern_);
            if (solver_.info() != Eigen::Success)
                throw NumericalError("singular weight system (disconnected component without constraints?)");
            w = solver_.solve(rhs_);
            if (!w.allFinite()) throw NumericalError("weight solve produced non-finite values");

            // clamp bound violators
            int clamped = 0;
            for (int i = 0; i < n; ++i) {
                if (fixed[size_t(i)] || active[size_t(i)]) continue;
                if (w[i] < -bound_tol) {
                    active[size_t(i)] = 1;
                    value[i] = 0.0;
                    ++clamped;
                } else if (w[i] > 1.0 + bound_tol) {
                    active[size_t(i)] = 1;
                    value[i] = 1.0;
                    ++clamped;
                }
            }
            if (clamped > 0) continue;

            // release the worst wrong-sign multiplier among active bounds
            const Eigen::VectorXd grad = q_ * w;
            int release = -1;
            double worst = -kkt_tol_ * std::max(1.0, dual_scale);
            for (int i = 0; i < n; ++i) {
                if (!active[size_t(i)]) continue;
                // lower bound wants grad >= 0, upper bound wants grad <= 0
                const double violation = value[i] == 0.0 ? grad[i] : -grad[i];
                if (violation < worst) {
                    worst = violation;
                    release = i;
                }
            }
            if (release < 0) return w;
            active[size_t(release)] = 0;
        }
        throw NumericalError("active-set iteration did not converge");
    }

private:
    void rebuild(const std::vector<char>& fixed, const std::vector<char>& active,
                 const Eigen::VectorXd& value) {
        const int n = int(q_.rows());
        rhs_ = Eigen::VectorXd::Zero(n);
        for (int col = 0; col < n; ++col) {
            const bool col_con = fixed[size_t(col)] || active[size_t(col)];
            Eigen::SparseMatrix<double>::InnerIterator src(q_, col);
            for (Eigen::SparseMatrix<double>::InnerIterator dst(pattern_, col); dst; ++dst, ++src) {
                const int row = int(dst.row());
                const bool row_con = fixed[size_t(row)] || active[size_t(row)];
                if (row_con) {
                    dst.valueRef() = row == col ? 1.0 : 0.0;
                } else if (col_con) {
                    dst.valueRef() = 0.0;
                    rhs_[row] -= src.value() * value[col];
                } else {
                    dst.valueRef() = src.value();
                }
            }
        }
        for (int i = 0; i < n; ++i)
            if (fixed[size_t(i)] || active[size_t(i)]) rhs_[i] = value[i];
    }

    const Eigen::SparseMatrix<double>& q_;
    Eigen::SparseMatrix<double> pattern_;
    Eigen::VectorXd rhs_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
    double kkt_tol_;
    int max_iters_;
};

}  // namespace

WeightMatrix solve_weights(const TetMesh& mesh, const HandleSet& handles,
                           const SolveOptions& opts) {
    handles.validate(mesh);
    const int n = mesh.node_count();
    const int nh = handles.count();
    const Eigen::SparseMatrix<double> q = bilaplacian(mesh);
    const ConstraintSet cs = dirichlet_constraints(mesh, handles);

    WeightMatrix w;
    w.values.resize(n, nh);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    parallel_for(nh, [&](std::int64_t b) {
        Eigen::VectorXd dirichlet = Eigen::VectorXd::Constant(n, nan);
        for (std::size_t k = 0; k < cs.node_ids.size(); ++k)
            dirichlet[cs.node_ids[k]] = cs.unit_handle[k] == int(b) ? 1.0 : 0.0;
        BoundedSolver solver(q, opts.kkt_tol, opts.max_active_set_iters);
        w.values.col(b) = solver.solve(dirichlet);
    }, opts.n_threads);

    // exact constraint rows
    for (std::size_t k = 0; k < cs.node_ids.size(); ++k) {
        w.values.row(cs.node_ids[k]).setZero();
        w.values(cs.node_ids[k], cs.unit_handle[k]) = 1.0;
    }
    return w;
}

namespace {

// nearest handle per node by multi-source Dijkstra over tet edges
std::vector<int> nearest_handle_by_graph(const TetMesh& mesh, const HandleSet& handles) {
    const int n = mesh.node_count();
    std::vector<std::vector<std::pair<int, double>>> adj(static_cast<size_t>(n));
    std::set<std::pair<int, int>> seen;
    for (const auto& t : mesh.tets)
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) {
                const int a = std::min(t[size_t(i)], t[size_t(j)]);
                const int b = std::max(t[size_t(i)], t[size_t(j)]);
                if (!seen.insert({a, b}).second) continue;
                const double len = (mesh.nodes.col(a) - mesh.nodes.col(b)).norm();
                adj[size_t(a)].push_back({b, len});
                adj[size_t(b)].push_back({a, len});
            }

    std::vector<double> dist(size_t(n), std::numeric_limits<double>::infinity());
    std::vector<int> label(size_t(n), -1);
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (int b = 0; b < handles.count(); ++b)
        for (int node : handles.handles[size_t(b)].centerline_nodes) {
            dist[size_t(node)] = 0.0;
            label[size_t(node)] = b;
            heap.emplace(0.0, node);
        }
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[size_t(u)]) continue;
        for (const auto& [v, len] : adj[size_t(u)]) {
            const double nd = d + len;
            if (nd < dist[size_t(v)]) {
                dist[size_t(v)] = nd;
                label[size_t(v)] = label[size_t(u)];
                heap.emplace(nd, v);
            }
        }
    }
    return label;
}

}  // namespace

WeightMatrix normalize_weights(WeightMatrix w, const TetMesh* mesh, const HandleSet* handles) {
    if (!w.values.allFinite()) throw InputError("weight matrix has non-finite entries");
    w.fallback_rows.clear();
    std::vector<int> nearest;
    for (int i = 0; i < w.rows(); ++i) {
        const double sum = w.values.row(i).sum();
        if (sum > 1e-12) {
            w.values.row(i) /= sum;
        } else {
            if (mesh == nullptr || handles == nullptr)
                throw NumericalError("zero-sum weight row with no mesh for the geodesic fallback");
            if (nearest.empty()) nearest = nearest_handle_by_graph(*mesh, *handles);
            w.values.row(i).setZero();
            const int h = nearest[size_t(i)] >= 0 ? nearest[size_t(i)] : 0;
            w.values(i, h) = 1.0;
            w.fallback_rows.push_back(i);
        }
    }
    return w;
}

Eigen::MatrixXd wall_weights(const WeightMatrix& w, const TetMesh& mesh,
                             const SurfaceMesh& surface) {
    if (int(mesh.surface_to_node.size()) != surface.vertex_count())
        throw InputError("surface does not match the tet mesh");
    Eigen::MatrixXd out(surface.vertex_count(), w.handles());
    for (int v = 0; v < surface.vertex_count(); ++v)
        out.row(v) = w.values.row(mesh.surface_to_node[size_t(v)]);
    return out;
}

void apply_skinning_positions(const Points3& rest, const Eigen::MatrixXd& vertex_weights,
                              const std::vector<RigidTransform>& transforms, Points3& out) {
    const int nv = int(rest.cols());
    const int nh = int(transforms.size());
    if (vertex_weights.rows() != nv || vertex_weights.cols() != nh)
        throw InputError("weight matrix does not match vertices/transforms");

    // 3x4 affine per handle; displacement form keeps identity transforms exact
    std::vector<Eigen::Matrix<double, 3, 4>> affine(static_cast<size_t>(nh));
    std::vector<char> is_identity(size_t(nh), 0);
    for (int b = 0; b < nh; ++b) {
        affine[size_t(b)].leftCols<3>() = transforms[size_t(b)].rotation.toRotationMatrix();
        affine[size_t(b)].col(3) = transforms[size_t(b)].translation;
        is_identity[size_t(b)] =
            affine[size_t(b)].leftCols<3>().isIdentity(0.0) &&
            transforms[size_t(b)].translation.isZero(0.0);
    }

    out.resize(3, nv);
    parallel_for(nv, [&](std::int64_t v) {
        const Vec3 x = rest.col(v);
        Vec3 acc = x;
        for (int b = 0; b < nh; ++b) {
            const double wv = vertex_weights(v, b);
            if (wv == 0.0 || is_identity[size_t(b)]) continue;
            const Vec3 tx = affine[size_t(b)].leftCols<3>() * x + affine[size_t(b)].col(3);
            acc += wv * (tx - x);
        }
        out.col(v) = acc;
    });
}

SurfaceMesh apply_skinning(const SurfaceMesh& surface, const Eigen::MatrixXd& vertex_weights,
                           const std::vector<RigidTransform>& transforms) {
    SurfaceMesh out = surface;
    apply_skinning_positions(surface.vertices, vertex_weights, transforms, out.vertices);
    return out;
}

}  // namespace artery
