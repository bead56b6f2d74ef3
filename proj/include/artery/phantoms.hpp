#pragma once

#include "artery/core.hpp"
#include "artery/dynamics.hpp"
#include "artery/geometry.hpp"
#include "artery/tree.hpp"
#include "artery/volume.hpp"

#include <cstdint>
#include <string>

namespace artery {

enum class PhantomKind { StraightTube, BentTube, YBranch, Helix, TorusArc };

PhantomKind phantom_kind_from_string(const std::string& name);

// Deterministic synthetic test asset: Gaussian-profile tube volume plus the
// analytic ground-truth tree. Half-max thresholding of the profile recovers
// the nominal radius.
struct PhantomSpec {
    PhantomKind kind = PhantomKind::StraightTube;
    double radius_mm = 1.5;
    double length_mm = 20.0;
    double voxel_mm = 0.25;
    double profile_width_mm = 0.0;  // 0 = radius / sqrt(2 ln 2)
    std::uint64_t seed = 0;

    void validate() const;
    double profile_sigma() const;
};

struct Phantom {
    VoxelVolume volume;
    VesselTree tree;      // analytic ground truth
    SurfaceMesh surface;  // lofted from the ground-truth tree
};

Phantom make_phantom(const PhantomSpec& spec);

// Analytic ground-truth tree alone (no volume rasterization).
VesselTree phantom_tree(const PhantomSpec& spec);

// Binary mask of the analytic phantom at the half-max threshold.
VoxelVolume phantom_mask(const PhantomSpec& spec);

enum class MotionMode { RigidTranslate, BendCycle, Breathe };

MotionMode motion_mode_from_string(const std::string& name);

// Closed periodic key-pose sets over n_phases (pose k at phase fraction k/n).
std::vector<KeyPose> make_motion_keyposes(const HandleSet& handles, const TetMesh& mesh,
                                          const std::vector<CrossSection>& rest_sections,
                                          MotionMode mode, int n_phases, double amplitude);

}  // namespace artery
