#include "artery/dynamics.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <set>

namespace artery {

void MechanicalConstraints::validate() const {
    if (!(theta_max_deg > 0) || !(r_min_mm > 0) || !(eps_max > 0) || !(youngs_modulus_mpa > 0) ||
        !(eps_r_cap > 0) || delta_max_mm < 0)
        throw InputError("mechanical constraint limits must be positive");
}

void EnergyWeights::validate() const {
    if (omega1 < 0 || omega2 < 0 || !(omega1 + omega2 > 0))
        throw InputError("omega1 + omega2 must be positive");
    if (!(lambda_smooth > 0)) throw InputError("lambda_smooth must be positive");
}

KeyPose interpolate_pose(const KeyPose& p1, const KeyPose& p2, double t) {
    if (t < 0.0 || t > 1.0) throw InputError("interpolation parameter outside [0,1]");
    if (p1.transforms.size() != p2.transforms.size() || p1.sections.size() != p2.sections.size())
        throw InputError("poses are structurally different");

    KeyPose out;
    out.phase_index = t < 1.0 ? p1.phase_index : p2.phase_index;
    out.rr_percent = (1.0 - t) * p1.rr_percent + t * p2.rr_percent;
    out.transforms.resize(p1.transforms.size());
    for (std::size_t b = 0; b < p1.transforms.size(); ++b) {
        const auto& a = p1.transforms[b];
        const auto& c = p2.transforms[b];
        // endpoint-exact blends
        if (t == 0.0) {
            out.transforms[b] = a;
        } else if (t == 1.0) {
            out.transforms[b] = c;
        } else {
            out.transforms[b].rotation = a.rotation.slerp(t, c.rotation);
            out.transforms[b].translation = (1.0 - t) * a.translation + t * c.translation;
        }
    }
    out.sections.resize(p1.sections.size());
    for (std::size_t s = 0; s < p1.sections.size(); ++s) {
        const auto& a = p1.sections[s];
        const auto& c = p2.sections[s];
        if (t == 0.0) out.sections[s] = a;
        else if (t == 1.0) out.sections[s] = c;
        else
            out.sections[s] = {(1.0 - t) * a.a_mm + t * c.a_mm,
                               (1.0 - t) * a.b_mm + t * c.b_mm,
                               (1.0 - t) * a.eps_r + t * c.eps_r};
    }
    return out;
}

CrossSection deform_cross_section(const CrossSection& section, double eps_r, double eps_r_cap,
                                  bool* clamped) {
    if (!(section.area0_mm2 > 0)) throw InputError("nonpositive reference area A0");
    if (clamped) *clamped = false;
    double e = eps_r;
    if (std::abs(e) > eps_r_cap) {
        e = std::clamp(e, -eps_r_cap, eps_r_cap);
        if (clamped) *clamped = true;
    }
    const double target = section.area0_mm2 * (1.0 + e);
    const double scale = std::sqrt(target / (M_PI * section.a_mm * section.b_mm));
    CrossSection out = section;
    out.a_mm = section.a_mm * scale;
    out.b_mm = section.b_mm * scale;
    for (auto& p : out.contour) p *= scale;
    return out;
}

Points3 pose_positions(const SurfaceMesh& surface, const std::vector<CrossSection>& rest_sections,
                       const Eigen::MatrixXd& vertex_weights, const KeyPose& pose) {
    const int nv = surface.vertex_count();
    Points3 scaled = surface.vertices;

    if (!pose.sections.empty()) {
        if (pose.sections.size() != rest_sections.size())
            throw InputError("pose sections do not match rest sections");
        for (int v = 0; v < nv; ++v) {
            const int ring = surface.vertex_ring[size_t(v)];
            const int sec = surface.vertex_section[size_t(v)];
            if (ring < 0 || sec < 0) continue;
            const auto& state = pose.sections[size_t(sec)];
            const auto& rest = rest_sections[size_t(sec)];
            // pose semi-axes already carry the area change (deform_cross_section)
            const double sa = state.a_mm / rest.a_mm;
            const double sb = state.b_mm / rest.b_mm;
            const auto& info = surface.rings[size_t(ring)];
            const Vec3 off = surface.vertex(v) - info.origin_mm;
            const double cn = off.dot(info.normal);
            const double cb = off.dot(info.binormal);
            const Vec3 rest_axis = off - cn * info.normal - cb * info.binormal;
            scaled.col(v) = info.origin_mm + rest_axis + sa * cn * info.normal + sb * cb * info.binormal;
        }
    }

    Points3 out;
    apply_skinning_positions(scaled, vertex_weights, pose.transforms, out);
    return out;
}

namespace {

Eigen::SparseMatrix<double> graph_laplacian(int n, const std::vector<std::array<int, 3>>& tris) {
    std::set<std::pair<int, int>> edges;
    for (const auto& t : tris)
        for (int e = 0; e < 3; ++e) {
            const int a = t[size_t(e)], b = t[size_t((e + 1) % 3)];
            edges.insert({std::min(a, b), std::max(a, b)});
        }
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(n);
    for (const auto& [a, b] : edges) {
        trips.emplace_back(a, b, -1.0);
        trips.emplace_back(b, a, -1.0);
        deg[a] += 1.0;
        deg[b] += 1.0;
    }
    for (int i = 0; i < n; ++i) {
        if (deg[i] == 0.0) throw InputError("isolated vertex in mesh adjacency");
        trips.emplace_back(i, i, deg[i]);
    }
    Eigen::SparseMatrix<double> l(n, n);
    l.setFromTriplets(trips.begin(), trips.end());
    return l;
}

}  // namespace

MotionSequence regularize_velocity(MotionSequence seq, const EnergyWeights& weights) {
    weights.validate();
    if (seq.frames.size() < 2) throw InputError("need at least 2 frames to regularize");
    const int n = int(seq.frames.front().positions.cols());
    const Eigen::SparseMatrix<double> lap = graph_laplacian(n, seq.triangles);

    Eigen::SparseMatrix<double> sys(n, n);
    {
        Eigen::SparseMatrix<double> id(n, n);
        id.setIdentity();
        sys = id + (1.0 / weights.lambda_smooth) * lap;
    }
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(sys);
    if (solver.info() != Eigen::Success) throw NumericalError("velocity smoothing factorization failed");

    const double dt = seq.period_T / double(seq.frames.size());
    for (auto& frame : seq.frames) {
        Eigen::MatrixXd v = frame.velocities.transpose();  // n x 3
        for (int iter = 0; iter < 100; ++iter) {
            const double residual = ((lap * v).cwiseAbs().maxCoeff() / weights.lambda_smooth) /
                                    (1.0 + v.cwiseAbs().maxCoeff());
            if (residual <= 1e-6) break;
            v = solver.solve(v);
        }
        frame.velocities = v.transpose();
    }

    // re-integrate between pinned key-pose frames, spreading the closure error
    const int sub = std::max(1, seq.subdivision);
    const int nf = int(seq.frames.size());
    if (sub > 1) {
        for (int start = 0; start < nf; start += sub) {
            const int end = start + sub;  // next pinned frame (wraps to 0)
            Points3 cur = seq.frames[size_t(start)].positions;
            std::vector<Points3> integrated(static_cast<size_t>(sub - 1));
            for (int f = start + 1; f < end; ++f) {
                cur += dt * seq.frames[size_t(f)].velocities;
                integrated[size_t(f - start - 1)] = cur;
            }
            const Points3& target = seq.frames[size_t(end % nf)].positions;
            const Points3 drift = target - (cur + dt * seq.frames[size_t(end % nf)].velocities);
            for (int f = start + 1; f < end; ++f) {
                const double fraction = double(f - start) / double(sub);
                seq.frames[size_t(f)].positions =
                    integrated[size_t(f - start - 1)] + fraction * drift;
            }
        }
        // keep stored velocities consistent with the corrected positions
        for (int f = 0; f < nf; ++f) {
            const Points3& prev = seq.frames[size_t((f + nf - 1) % nf)].positions;
            seq.frames[size_t(f)].velocities = (seq.frames[size_t(f)].positions - prev) / dt;
        }
    }
    return seq;
}

ViolationReport check_constraints(const MotionSequence& seq, const MechanicalConstraints& mc) {
    mc.validate();
    if (seq.frames.empty()) throw InputError("empty sequence");
    ViolationReport report;

    double delta = mc.delta_max_mm;
    if (delta <= 0.0) {
        Vec3 lo = seq.frames.front().positions.rowwise().minCoeff();
        Vec3 hi = seq.frames.front().positions.rowwise().maxCoeff();
        delta = 0.05 * (hi - lo).norm();
    }

    const int nh = int(seq.handle_rest_points.cols());
    const int nf = int(seq.frames.size());

    for (int f = 0; f < nf; ++f) {
        const auto& frame = seq.frames[size_t(f)];

        // deformed handle axes and anchor points
        Points3 pts(3, nh), axes(3, nh);
        for (int b = 0; b < nh; ++b) {
            const auto& tr = frame.pose.transforms.size() == size_t(nh)
                                 ? frame.pose.transforms[size_t(b)]
                                 : RigidTransform{};
            pts.col(b) = tr.apply(seq.handle_rest_points.col(b));
            axes.col(b) = tr.rotation * seq.handle_rest_axes.col(b);
        }

        for (int b = 0; b + 1 < nh; ++b) {
            if (seq.handle_branch[size_t(b)] != seq.handle_branch[size_t(b + 1)]) continue;
            const double c = std::clamp(axes.col(b).dot(axes.col(b + 1)), -1.0, 1.0);
            const double angle = std::acos(c) * 180.0 / M_PI;
            report.max_bend_deg = std::max(report.max_bend_deg, angle);
            if (angle > mc.theta_max_deg)
                report.items.push_back({Violation::Kind::BendAngle, f,
                                        "handles " + std::to_string(b) + "-" + std::to_string(b + 1),
                                        angle, mc.theta_max_deg});

            // longitudinal strain between adjacent handle anchors
            const double rest_gap = seq.handle_rest_gap_mm[size_t(b)];
            if (rest_gap > 1e-9) {
                const double gap = (pts.col(b + 1) - pts.col(b)).norm();
                const double strain = std::abs(gap - rest_gap) / rest_gap;
                report.max_strain = std::max(report.max_strain, strain);
                if (strain > mc.eps_max)
                    report.items.push_back({Violation::Kind::Strain, f,
                                            "handles " + std::to_string(b) + "-" +
                                                std::to_string(b + 1),
                                            strain, mc.eps_max});
            }
        }

        // radial strain per section
        for (std::size_t s = 0; s < frame.pose.sections.size(); ++s) {
            const double strain = std::abs(frame.pose.sections[s].eps_r);
            report.max_strain = std::max(report.max_strain, strain);
            if (strain > mc.eps_max)
                report.items.push_back({Violation::Kind::Strain, f, "section " + std::to_string(s),
                                        strain, mc.eps_max});
        }

        // discrete curvature radius along the deformed handle chain
        for (int b = 0; b + 2 < nh; ++b) {
            if (seq.handle_branch[size_t(b)] != seq.handle_branch[size_t(b + 2)] ||
                seq.handle_branch[size_t(b)] != seq.handle_branch[size_t(b + 1)])
                continue;
            const Vec3 a = pts.col(b), m = pts.col(b + 1), c = pts.col(b + 2);
            const double la = (m - a).norm(), lb = (c - m).norm(), lc = (c - a).norm();
            const double area2 = (m - a).cross(c - a).norm();
            if (area2 < 1e-12) continue;  // collinear: infinite radius
            const double radius = la * lb * lc / (2.0 * area2);
            report.min_curvature_radius_mm = std::min(report.min_curvature_radius_mm, radius);
            if (radius < mc.r_min_mm)
                report.items.push_back({Violation::Kind::CurvatureRadius, f,
                                        "handle " + std::to_string(b + 1), radius, mc.r_min_mm});
        }

        // temporal coherence
        if (f > 0) {
            const double disp =
                (frame.positions - seq.frames[size_t(f - 1)].positions).colwise().norm().maxCoeff();
            report.max_frame_displacement_mm = std::max(report.max_frame_displacement_mm, disp);
            if (disp > delta)
                report.items.push_back({Violation::Kind::FrameDisplacement, f, "frame step", disp,
                                        delta});
        }
    }

    report.max_stress_mpa = mc.youngs_modulus_mpa * report.max_strain;
    report.periodicity_gap = seq.periodicity_gap;
    if (seq.periodicity_gap > 1e-9)
        report.items.push_back({Violation::Kind::Periodicity, nf - 1, "cycle closure",
                                seq.periodicity_gap, 1e-9});
    return report;
}

SequenceEnergy sequence_energy(const MotionSequence& seq, const EnergyWeights& w) {
    w.validate();
    if (seq.frames.size() < 2) throw InputError("need at least 2 frames");
    SequenceEnergy e;
    const int nf = int(seq.frames.size());
    for (int f = 1; f < nf; ++f)
        e.e_temp += (seq.frames[size_t(f)].positions - seq.frames[size_t(f - 1)].positions)
                        .colwise()
                        .squaredNorm()
                        .sum();

    // neighborhood means from the triangle adjacency
    const int n = int(seq.frames.front().positions.cols());
    std::vector<std::vector<int>> nbr(static_cast<size_t>(n));
    {
        std::set<std::pair<int, int>> edges;
        for (const auto& t : seq.triangles)
            for (int k = 0; k < 3; ++k) {
                const int a = t[size_t(k)], b = t[size_t((k + 1) % 3)];
                if (edges.insert({std::min(a, b), std::max(a, b)}).second) {
                    nbr[size_t(a)].push_back(b);
                    nbr[size_t(b)].push_back(a);
                }
            }
    }
    for (const auto& frame : seq.frames) {
        double es = 0.0;
        for (int i = 0; i < n; ++i) {
            if (nbr[size_t(i)].empty()) continue;
            Vec3 mean = Vec3::Zero();
            for (int j : nbr[size_t(i)]) mean += frame.positions.col(j);
            mean /= double(nbr[size_t(i)].size());
            es += (mean - frame.positions.col(i)).squaredNorm();
        }
        e.e_spatial += es;
    }
    e.e_total = w.omega1 * e.e_temp + w.omega2 * e.e_spatial;
    return e;
}

MotionSequence generate_sequence(const std::vector<KeyPose>& key_poses,
                                 const SurfaceMesh& surface,
                                 const std::vector<CrossSection>& rest_sections,
                                 const Eigen::MatrixXd& vertex_weights,
                                 const HandleSet& handles, const TetMesh& mesh,
                                 const SequenceOptions& opts) {
    if (key_poses.size() < 2) throw InputError("need at least 2 key poses");
    if (opts.subdivision < 1) throw InputError("subdivision must be >= 1");
    opts.constraints.validate();
    opts.energy.validate();
    for (const auto& kp : key_poses)
        if (int(kp.transforms.size()) != handles.count() ||
            kp.sections.size() != key_poses.front().sections.size())
            throw InputError("key poses are structurally different");

    MotionSequence seq;
    seq.key_poses = key_poses;
    seq.subdivision = opts.subdivision;
    seq.triangles = surface.triangles;

    // rest handle geometry for the constraint checks
    const int nh = handles.count();
    seq.handle_rest_points.resize(3, nh);
    seq.handle_rest_axes.resize(3, nh);
    seq.handle_branch.resize(size_t(nh));
    seq.handle_rest_gap_mm.assign(size_t(nh), 0.0);
    for (int b = 0; b < nh; ++b) {
        const auto& h = handles.handles[size_t(b)];
        Vec3 mean = Vec3::Zero();
        for (int nd : h.centerline_nodes) mean += mesh.nodes.col(nd);
        mean /= double(h.centerline_nodes.size());
        seq.handle_rest_points.col(b) = mean;
        Vec3 axis = mesh.nodes.col(h.centerline_nodes.back()) -
                    mesh.nodes.col(h.centerline_nodes.front());
        if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
        seq.handle_rest_axes.col(b) = axis.normalized();
        seq.handle_branch[size_t(b)] = h.branch_id;
    }
    for (int b = 0; b + 1 < nh; ++b)
        if (seq.handle_branch[size_t(b)] == seq.handle_branch[size_t(b + 1)])
            seq.handle_rest_gap_mm[size_t(b)] =
                (seq.handle_rest_points.col(b + 1) - seq.handle_rest_points.col(b)).norm();

    const int n_kp = int(key_poses.size());
    const int total = n_kp * opts.subdivision;
    const double dt = seq.period_T / double(total);
    seq.frames.resize(size_t(total));
    for (int f = 0; f < total; ++f) {
        const int k = f / opts.subdivision;
        const double t = double(f % opts.subdivision) / double(opts.subdivision);
        MotionFrame frame;
        frame.frame_index = f;
        frame.t = double(f) / double(total);
        frame.pose = interpolate_pose(key_poses[size_t(k)], key_poses[size_t((k + 1) % n_kp)], t);
        frame.rr_percent = frame.pose.rr_percent;
        frame.positions = pose_positions(surface, rest_sections, vertex_weights, frame.pose);
        seq.frames[size_t(f)] = std::move(frame);
    }
    for (int f = 0; f < total; ++f) {
        const Points3& prev = seq.frames[size_t((f + total - 1) % total)].positions;
        seq.frames[size_t(f)].velocities = (seq.frames[size_t(f)].positions - prev) / dt;
    }

    // closure: the wrap interpolation at t = 1 targets key pose 0 exactly
    const Points3 closing = pose_positions(
        surface, rest_sections, vertex_weights,
        interpolate_pose(key_poses[size_t(n_kp - 1)], key_poses[0], 1.0));
    seq.periodicity_gap = (closing - seq.frames[0].positions).colwise().norm().maxCoeff();

    if (opts.regularize && opts.subdivision > 1) seq = regularize_velocity(std::move(seq), opts.energy);

    const ViolationReport report = check_constraints(seq, opts.constraints);
    if (opts.strict && !report.items.empty())
        throw InputError("constraint violation in strict mode: " + report.items.front().location);
    return seq;
}

}  // namespace artery
