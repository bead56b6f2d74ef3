#pragma once

#include "artery/core.hpp"
#include "artery/geometry.hpp"
#include "artery/skinning.hpp"

#include <string>
#include <vector>

namespace artery {

struct SectionState {
    double a_mm = 1.0;
    double b_mm = 1.0;
    double eps_r = 0.0;
};

// Anchor deformation state at one cardiac phase.
struct KeyPose {
    int phase_index = 0;
    double rr_percent = 0.0;
    std::vector<RigidTransform> transforms;  // one per handle
    std::vector<SectionState> sections;      // one per cross-section, global order
};

struct MotionFrame {
    int frame_index = 0;
    double t = 0.0;  // normalized cycle time in [0, 1)
    double rr_percent = 0.0;
    KeyPose pose;        // interpolated pose that produced this frame
    Points3 positions;   // 3 x n vertex positions
    Points3 velocities;  // dP/dt, same layout
};

struct MotionSequence {
    std::vector<KeyPose> key_poses;
    std::vector<MotionFrame> frames;
    double period_T = 1.0;
    double periodicity_gap = 0.0;  // max vertex distance between P(T) and P(0)
    int subdivision = 1;

    // reference topology and rest data carried for validation and checks
    std::vector<std::array<int, 3>> triangles;
    Points3 handle_rest_points;  // one column per handle (segment midpoints)
    Points3 handle_rest_axes;    // unit segment directions
    std::vector<int> handle_branch;
    std::vector<double> handle_rest_gap_mm;  // distance to the next handle in branch
};

struct MechanicalConstraints {
    double theta_max_deg = 90.0;
    double r_min_mm = 1.0;
    double eps_max = 0.05;
    double youngs_modulus_mpa = 1.5;
    double delta_max_mm = 0.0;  // 0 = derive as 5% of the bounding-box diagonal
    double eps_r_cap = 0.05;

    void validate() const;
};

struct EnergyWeights {
    double omega1 = 1.0;
    double omega2 = 1.0;
    double lambda_smooth = 10.0;

    void validate() const;
};

struct Violation {
    enum class Kind { BendAngle, CurvatureRadius, Strain, FrameDisplacement, Periodicity };
    Kind kind;
    int frame_index;
    std::string location;
    double value;
    double limit;
};

struct ViolationReport {
    std::vector<Violation> items;
    double max_bend_deg = 0.0;
    double min_curvature_radius_mm = std::numeric_limits<double>::infinity();
    double max_strain = 0.0;
    double max_stress_mpa = 0.0;
    double max_frame_displacement_mm = 0.0;
    double periodicity_gap = 0.0;
};

struct SequenceEnergy {
    double e_temp = 0.0;
    double e_spatial = 0.0;
    double e_total = 0.0;
};

// Blend of two structurally identical poses: translations and section
// parameters linearly, rotations by shortest-arc spherical interpolation.
KeyPose interpolate_pose(const KeyPose& p1, const KeyPose& p2, double t);

// Area-conserving section update: semi-axes scaled so pi*a*b = A0*(1+eps_r),
// aspect ratio preserved. eps_r beyond the cap is clamped and flagged.
CrossSection deform_cross_section(const CrossSection& section, double eps_r,
                                  double eps_r_cap = 0.05, bool* clamped = nullptr);

// Per-vertex positions for a pose: section scaling about the ring origins,
// then linear-blend skinning with the pose transforms.
Points3 pose_positions(const SurfaceMesh& surface, const std::vector<CrossSection>& rest_sections,
                       const Eigen::MatrixXd& vertex_weights, const KeyPose& pose);

// Implicit graph-heat smoothing of the per-frame velocity fields,
// (I + (1/lambda) L) v' = v, iterated until the normalized residual
// |(1/lambda) L v| / (1 + |v|) drops to 1e-6 (or 100 steps). Positions are
// re-integrated from the smoothed velocities with key-pose frames pinned.
MotionSequence regularize_velocity(MotionSequence seq, const EnergyWeights& weights);

ViolationReport check_constraints(const MotionSequence& seq, const MechanicalConstraints& mc);

SequenceEnergy sequence_energy(const MotionSequence& seq, const EnergyWeights& w);

struct SequenceOptions {
    int subdivision = 1;
    bool strict = false;
    bool regularize = true;
    MechanicalConstraints constraints;
    EnergyWeights energy;
};

// Full synthesis: interpolate key poses (wrapping last -> first), deform
// sections, skin, regularize velocities, check constraints. Frames at
// key-pose parameters reproduce the key poses exactly.
MotionSequence generate_sequence(const std::vector<KeyPose>& key_poses,
                                 const SurfaceMesh& surface,
                                 const std::vector<CrossSection>& rest_sections,
                                 const Eigen::MatrixXd& vertex_weights,
                                 const HandleSet& handles, const TetMesh& mesh,
                                 const SequenceOptions& opts);

}  // namespace artery
