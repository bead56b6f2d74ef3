#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "artery/dynamics.hpp"
#include "artery/phantoms.hpp"
#include "../tests/oracles.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <set>

using namespace artery;

namespace {

struct Rig {
    oracle::TubeAssets assets;
    HandleSet handles;
    Eigen::MatrixXd vw;
    std::vector<CrossSection> sections;
};

Rig make_rig(double length = 12.0) {
    Rig rig;
    MeshSizingParams sizing;
    sizing.h_min_mm = 0.8;
    sizing.h_max_mm = 1.2;
    rig.assets = oracle::make_tube(1.0, length, 1.0, sizing);
    rig.handles = build_handles(rig.assets.mesh, 4.0);
    const WeightMatrix w = normalize_weights(solve_weights(rig.assets.mesh, rig.handles),
                                             &rig.assets.mesh, &rig.handles);
    rig.vw = wall_weights(w, rig.assets.mesh, rig.assets.surface);
    rig.sections = rig.assets.sections[0];
    return rig;
}

double dirichlet_energy(const MotionSequence& seq, const Points3& field) {
    std::set<std::pair<int, int>> edges;
    for (const auto& t : seq.triangles)
        for (int e = 0; e < 3; ++e) {
            const int a = t[size_t(e)], b = t[size_t((e + 1) % 3)];
            edges.insert({std::min(a, b), std::max(a, b)});
        }
    double sum = 0.0;
    for (const auto& [a, b] : edges) sum += (field.col(a) - field.col(b)).squaredNorm();
    return sum;
}

}  // namespace

TEST_CASE("pose interpolation endpoints and midpoint") {
    KeyPose a, b;
    a.rr_percent = 0.0;
    b.rr_percent = 10.0;
    a.transforms.resize(1);
    b.transforms.resize(1);
    a.transforms[0].translation = Vec3(0, 0, 0);
    b.transforms[0].translation = Vec3(2, 4, 6);
    b.transforms[0].rotation = Quat(Eigen::AngleAxisd(0.8, Vec3::UnitZ()));
    a.sections = {{1.0, 1.0, 0.0}};
    b.sections = {{1.1, 1.1, 0.02}};

    const KeyPose at0 = interpolate_pose(a, b, 0.0);
    CHECK(at0.transforms[0].translation == a.transforms[0].translation);
    CHECK(at0.sections[0].a_mm == a.sections[0].a_mm);
    CHECK(at0.transforms[0].rotation.coeffs() == a.transforms[0].rotation.coeffs());

    const KeyPose at1 = interpolate_pose(a, b, 1.0);
    CHECK(at1.transforms[0].translation == b.transforms[0].translation);
    CHECK(at1.transforms[0].rotation.coeffs() == b.transforms[0].rotation.coeffs());

    const KeyPose mid = interpolate_pose(a, b, 0.5);
    CHECK((mid.transforms[0].translation - Vec3(1, 2, 3)).norm() == 0.0);

    CHECK_THROWS_AS(interpolate_pose(a, b, 1.5), InputError);
    KeyPose c = b;
    c.transforms.clear();
    CHECK_THROWS_AS(interpolate_pose(a, c, 0.5), InputError);
}

TEST_CASE("slerp picks the shortest arc") {
    KeyPose a, b;
    a.transforms.resize(1);
    b.transforms.resize(1);
    a.transforms[0].rotation = Quat::Identity();
    Quat q(Eigen::AngleAxisd(0.5, Vec3::UnitX()));
    q.coeffs() *= -1.0;  // same rotation, opposite sign
    b.transforms[0].rotation = q;
    const KeyPose mid = interpolate_pose(a, b, 0.5);
    const double angle = Eigen::AngleAxisd(mid.transforms[0].rotation).angle();
    CHECK(angle == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("cross-section deformation conserves the prescribed area") {
    CrossSection cs;
    cs.a_mm = 1.0;
    cs.b_mm = 1.0;
    cs.area0_mm2 = M_PI;

    const CrossSection same = deform_cross_section(cs, 0.0);
    CHECK(M_PI * same.a_mm * same.b_mm == doctest::Approx(M_PI).epsilon(1e-15));

    const CrossSection grown = deform_cross_section(cs, 0.05);
    CHECK(grown.a_mm * grown.b_mm == doctest::Approx(1.05).epsilon(1e-12));
    CHECK(grown.a_mm / grown.b_mm == doctest::Approx(1.0).epsilon(1e-12));

    bool clamped = false;
    const CrossSection capped = deform_cross_section(cs, 0.2, 0.05, &clamped);
    CHECK(clamped);
    CHECK(capped.a_mm * capped.b_mm == doctest::Approx(1.05).epsilon(1e-12));

    // relative area error across the whole admissible range
    cs.a_mm = 1.4;
    cs.b_mm = 0.6;
    cs.area0_mm2 = M_PI * 1.4 * 0.6;
    for (double e = -0.05; e <= 0.05; e += 0.01) {
        const CrossSection d = deform_cross_section(cs, e);
        const double area = M_PI * d.a_mm * d.b_mm;
        CHECK(std::abs(area - cs.area0_mm2 * (1.0 + e)) <= 1e-12 * cs.area0_mm2);
        CHECK(d.a_mm / d.b_mm == doctest::Approx(1.4 / 0.6).epsilon(1e-12));
    }

    cs.area0_mm2 = 0.0;
    CHECK_THROWS_AS(deform_cross_section(cs, 0.0), InputError);
}

TEST_CASE("sequence energies") {
    MotionSequence seq;
    seq.triangles = {{0, 1, 2}};
    const int n = 3;
    MotionFrame f0, f1;
    f0.positions.resize(3, n);
    f0.positions << 0, 1, 0, 0, 0, 1, 0, 0, 0;
    f1.positions = f0.positions;
    seq.frames = {f0, f1};
    EnergyWeights w;

    SUBCASE("identical frames: zero temporal energy") {
        const SequenceEnergy e = sequence_energy(seq, w);
        CHECK(e.e_temp == 0.0);
    }
    SUBCASE("uniform unit displacement: E_temp = N") {
        for (int i = 0; i < n; ++i) seq.frames[1].positions.col(i).z() += 1.0;
        const SequenceEnergy e = sequence_energy(seq, w);
        CHECK(e.e_temp == doctest::Approx(double(n)));
    }
    SUBCASE("rigid translation leaves spatial energy unchanged") {
        const SequenceEnergy base = sequence_energy(seq, w);
        for (int i = 0; i < n; ++i) seq.frames[1].positions.col(i) += Vec3(3, -2, 5);
        const SequenceEnergy moved = sequence_energy(seq, w);
        // per-frame spatial contribution of frame 1 must match frame 0's
        CHECK(moved.e_spatial == doctest::Approx(base.e_spatial));
    }
}

TEST_CASE("velocity regularization properties") {
    Rig rig = make_rig();
    const int n = rig.assets.surface.vertex_count();

    MotionSequence seq;
    seq.triangles = rig.assets.surface.triangles;
    seq.subdivision = 1;
    MotionFrame f0, f1;
    f0.positions = rig.assets.surface.vertices;
    f1.positions = rig.assets.surface.vertices;
    f0.velocities = Points3::Zero(3, n);
    f1.velocities = Points3::Zero(3, n);
    seq.frames = {f0, f1};

    SUBCASE("uniform field is unchanged") {
        for (auto& fr : seq.frames) fr.velocities.colwise() = Vec3(1.0, -0.5, 2.0);
        EnergyWeights w;
        const MotionSequence out = regularize_velocity(seq, w);
        for (const auto& fr : out.frames)
            for (int i = 0; i < n; ++i)
                CHECK((fr.velocities.col(i) - Vec3(1.0, -0.5, 2.0)).norm() <= 1e-12);
    }
    SUBCASE("spike: dirichlet energy strictly decreases") {
        seq.frames[1].velocities.col(7) = Vec3(0, 0, 10.0);
        EnergyWeights w;
        const double before = dirichlet_energy(seq, seq.frames[1].velocities);
        const MotionSequence out = regularize_velocity(seq, w);
        const double after = dirichlet_energy(out, out.frames[1].velocities);
        CHECK(after < before);
        CHECK(after >= 0.0);
    }
    SUBCASE("matches a dense solve within 1e-8") {
        // deterministic pseudo-random field
        std::uint64_t state = 42;
        const auto next = [&state] {
            state = state * 6364136223846793005ull + 1442695040888963407ull;
            return double(state >> 11) * 0x1.0p-53 - 0.5;
        };
        for (int i = 0; i < n; ++i)
            seq.frames[1].velocities.col(i) = Vec3(next(), next(), next());
        EnergyWeights w;
        const Points3 input = seq.frames[1].velocities;
        const MotionSequence out = regularize_velocity(seq, w);

        // dense replica of the same iteration
        Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
        std::set<std::pair<int, int>> edges;
        for (const auto& t : seq.triangles)
            for (int e = 0; e < 3; ++e) {
                const int a = t[size_t(e)], b = t[size_t((e + 1) % 3)];
                edges.insert({std::min(a, b), std::max(a, b)});
            }
        for (const auto& [a, b] : edges) {
            lap(a, b) -= 1.0;
            lap(b, a) -= 1.0;
            lap(a, a) += 1.0;
            lap(b, b) += 1.0;
        }
        Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(n, n) + lap / w.lambda_smooth;
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
        Eigen::MatrixXd v = input.transpose();
        for (int iter = 0; iter < 100; ++iter) {
            const double residual = ((lap * v).cwiseAbs().maxCoeff() / w.lambda_smooth) /
                                    (1.0 + v.cwiseAbs().maxCoeff());
            if (residual <= 1e-6) break;
            v = lu.solve(v);
        }
        const double diff =
            (out.frames[1].velocities - Points3(v.transpose())).cwiseAbs().maxCoeff();
        CHECK(diff <= 1e-8);
    }
}

TEST_CASE("constraint checks") {
    Rig rig = make_rig(16.0);
    REQUIRE(rig.handles.count() == 4);
    MechanicalConstraints mc;
    mc.delta_max_mm = 100.0;

    const auto static_poses = make_motion_keyposes(rig.handles, rig.assets.mesh, rig.sections,
                                                   MotionMode::RigidTranslate, 4, 0.0);
    SequenceOptions opts;
    opts.subdivision = 2;
    opts.constraints = mc;
    const MotionSequence seq = generate_sequence(static_poses, rig.assets.surface, rig.sections,
                                                 rig.vw, rig.handles, rig.assets.mesh, opts);

    SUBCASE("static sequence: no violations, zero gap") {
        const ViolationReport report = check_constraints(seq, mc);
        CHECK(report.items.empty());
        CHECK(report.periodicity_gap == 0.0);
    }
    SUBCASE("bend of 100 degrees flags one angle violation") {
        MotionSequence bent = seq;
        for (auto& frame : bent.frames) {
            frame.pose.transforms.assign(size_t(rig.handles.count()), RigidTransform{});
            frame.pose.transforms.back().rotation =
                Quat(Eigen::AngleAxisd(100.0 * M_PI / 180.0, Vec3::UnitX()));
        }
        mc.eps_max = 10.0;  // isolate the angle check
        const ViolationReport report = check_constraints(bent, mc);
        int angle_violations = 0;
        for (const auto& v : report.items)
            if (v.kind == Violation::Kind::BendAngle) ++angle_violations;
        CHECK(angle_violations == int(bent.frames.size()));
        CHECK(report.max_bend_deg == doctest::Approx(100.0).epsilon(1e-9));
    }
    SUBCASE("strain 0.08 at E=1.5 reports stress 0.12 and flags") {
        MotionSequence strained = seq;
        for (auto& frame : strained.frames)
            for (auto& s : frame.pose.sections) s.eps_r = 0.08;
        const ViolationReport report = check_constraints(strained, mc);
        CHECK(report.max_strain == doctest::Approx(0.08));
        CHECK(report.max_stress_mpa == doctest::Approx(0.12));
        bool strain_flagged = false;
        for (const auto& v : report.items)
            strain_flagged = strain_flagged || v.kind == Violation::Kind::Strain;
        CHECK(strain_flagged);
    }
}

TEST_CASE("generate_sequence: counts, exactness, periodicity") {
    Rig rig = make_rig();
    const auto poses = make_motion_keyposes(rig.handles, rig.assets.mesh, rig.sections,
                                            MotionMode::RigidTranslate, 20, 1.0);
    REQUIRE(poses.size() == 20);
    SequenceOptions opts;
    opts.subdivision = 2;
    opts.constraints.delta_max_mm = 100.0;
    const MotionSequence seq = generate_sequence(poses, rig.assets.surface, rig.sections, rig.vw,
                                                 rig.handles, rig.assets.mesh, opts);
    CHECK(seq.frames.size() == 40);
    CHECK(seq.periodicity_gap <= 1e-9);

    // frame 0 reproduces key pose 0 exactly
    const Points3 kp0 = pose_positions(rig.assets.surface, rig.sections, rig.vw, poses[0]);
    CHECK((seq.frames[0].positions - kp0).cwiseAbs().maxCoeff() <= 1e-12);

    // key-pose frames stay exact after regularization
    const Points3 kp3 = pose_positions(rig.assets.surface, rig.sections, rig.vw, poses[3]);
    CHECK((seq.frames[6].positions - kp3).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("identical key poses give a static sequence") {
    Rig rig = make_rig();
    auto poses = make_motion_keyposes(rig.handles, rig.assets.mesh, rig.sections,
                                      MotionMode::RigidTranslate, 5, 0.0);
    SequenceOptions opts;
    opts.subdivision = 3;
    const MotionSequence seq = generate_sequence(poses, rig.assets.surface, rig.sections, rig.vw,
                                                 rig.handles, rig.assets.mesh, opts);
    for (const auto& frame : seq.frames)
        CHECK((frame.positions - seq.frames[0].positions).cwiseAbs().maxCoeff() == 0.0);
    const SequenceEnergy e = sequence_energy(seq, EnergyWeights{});
    CHECK(e.e_temp == 0.0);
}

TEST_CASE("strict mode rejects violating motion, report-only emits") {
    Rig rig = make_rig(16.0);
    const auto poses = make_motion_keyposes(rig.handles, rig.assets.mesh, rig.sections,
                                            MotionMode::RigidTranslate, 6, 5.0);
    SequenceOptions opts;
    opts.subdivision = 2;
    opts.constraints.delta_max_mm = 0.05;  // tight cap the 5 mm swing must violate

    opts.strict = false;
    const MotionSequence seq = generate_sequence(poses, rig.assets.surface, rig.sections, rig.vw,
                                                 rig.handles, rig.assets.mesh, opts);
    const ViolationReport report = check_constraints(seq, opts.constraints);
    CHECK(!report.items.empty());

    opts.strict = true;
    CHECK_THROWS_AS(generate_sequence(poses, rig.assets.surface, rig.sections, rig.vw, rig.handles,
                                      rig.assets.mesh, opts),
                    InputError);

    // compliant motion passes strict mode and satisfies the cap
    // (5 mm sinusoid over 12 frames steps at most 5 * 2 sin(pi/12) = 2.59 mm)
    opts.constraints.delta_max_mm = 3.0;
    const MotionSequence ok = generate_sequence(poses, rig.assets.surface, rig.sections, rig.vw,
                                                rig.handles, rig.assets.mesh, opts);
    const ViolationReport ok_report = check_constraints(ok, opts.constraints);
    CHECK(ok_report.max_frame_displacement_mm <= 3.0);
}
