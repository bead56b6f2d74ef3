#pragma once

#include "artery/core.hpp"
#include "artery/dynamics.hpp"
#include "artery/geometry.hpp"
#include "artery/tree.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace artery {

// Inextensible discrete guidewire, tip at the back of the node list.
struct Guidewire {
    Points3 nodes;  // 3 x n, mm
    double segment_length_mm = 1.0;
    double tip_radius_mm = 0.35;

    int count() const { return int(nodes.cols()); }
    void validate() const;
};

struct Contact {
    int triangle = -1;
    int wire_node = -1;
    double depth_mm = 0.0;  // penetration past the surface, 0 for proximity-only
    Vec3 normal = Vec3::Zero();  // inward: the push-back direction
};

// Axis-aligned box tree over mesh triangles; topology fixed, boxes refit per
// phase. Queries require a refit since the last mark_dirty().
class BoundingHierarchy {
public:
    explicit BoundingHierarchy(const std::vector<std::array<int, 3>>& triangles);

    void refit(const Points3& vertices);
    void mark_dirty() { dirty_ = true; }
    bool dirty() const { return dirty_; }

    // triangle candidates within `radius` of p (superset pruned by boxes)
    void gather(const Vec3& p, double radius, std::vector<int>& out) const;

    // containment invariant: every triangle box inside all ancestor boxes
    bool boxes_consistent(const Points3& vertices) const;

private:
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1;  // children, or leaf range when left < 0
        int begin = 0, end = 0;     // triangle index range (leaves)
    };
    void refit_node(int id, const Points3& vertices);

    std::vector<std::array<int, 3>> triangles_;
    std::vector<int> order_;  // triangle ids grouped per leaf
    std::vector<Node> nodes_;
    bool dirty_ = true;
};

// All wire-node/triangle proximities within tip_radius, identical to the
// all-pairs scan. Throws when the hierarchy is stale.
std::vector<Contact> collide_step(const Guidewire& wire, const SurfaceMesh& mesh,
                                  const BoundingHierarchy& bvh);

// Follow-the-leader advancement plus contact projection; segment lengths are
// restored to 1e-9 and residual penetration driven below 1e-3 mm.
Guidewire advance_guidewire(const Guidewire& wire, double advancement_mm,
                            const SurfaceMesh& mesh, const BoundingHierarchy& bvh);

struct ContrastParticles {
    struct Particle {
        Vec3 position_mm = Vec3::Zero();
        int branch_id = 0;
        double arc_mm = 0.0;
    };
    std::vector<Particle> particles;
    int injection_rate = 0;  // particles per injection command
    std::uint64_t seed = 0;
    std::uint64_t rng_state = 0;  // advanced deterministically
    std::int64_t outflow = 0;
    std::int64_t injected = 0;
};

// Kinematic advection along branch arcs; at a branch tail with children the
// choice is random with probability proportional to child radius cubed.
ContrastParticles advect_contrast(ContrastParticles p, const VesselTree& tree, double dt_s,
                                  double speed_mm_s);

// Injects n particles at the root branch head.
ContrastParticles inject_contrast(ContrastParticles p, const VesselTree& tree, int n);

struct ScenarioTick {
    int phase = 0;
    double advancement_mm = 0.0;
    std::optional<int> inject;  // particle count
};

struct Scenario {
    std::vector<ScenarioTick> ticks;
    std::uint64_t seed = 0;
    double dt_s = 0.04;
    double contrast_speed_mm_s = 50.0;
};

struct SimTickLog {
    int tick = 0;
    int phase = 0;
    Points3 wire_nodes;
    int contact_count = 0;
    std::int64_t particle_count = 0;
    std::int64_t outflow_count = 0;
};

struct SimLog {
    std::vector<SimTickLog> ticks;
};

// Scripted replay: per tick select the phase mesh, refit, advance the wire,
// resolve contacts, advect particles. Deterministic for a fixed seed.
SimLog run_scenario(const Scenario& scenario, const MotionSequence& sequence,
                    const SurfaceMesh& surface, const VesselTree& tree, Guidewire wire);

}  // namespace artery
