#include "artery/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace artery {

void Guidewire::validate() const {
    if (count() < 2) throw InputError("guidewire needs at least 2 nodes");
    if (!(segment_length_mm > 0) || !(tip_radius_mm > 0))
        throw InputError("guidewire lengths must be positive");
    for (int i = 0; i + 1 < count(); ++i) {
        const double len = (nodes.col(i + 1) - nodes.col(i)).norm();
        if (std::abs(len - segment_length_mm) > 1e-9)
            throw InputError("guidewire segment length violated");
    }
}

BoundingHierarchy::BoundingHierarchy(const std::vector<std::array<int, 3>>& triangles)
    : triangles_(triangles) {
    order_.resize(triangles_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(triangles_.size() * 2 + 1);

    // balanced tree over order_ ranges; leaf grouping happens at refit
    struct Range {
        int begin, end, node;
    };
    std::vector<Range> stack;
    nodes_.push_back({});
    nodes_[0].begin = 0;
    nodes_[0].end = int(order_.size());
    stack.push_back({0, int(order_.size()), 0});
    while (!stack.empty()) {
        const Range r = stack.back();
        stack.pop_back();
        if (r.end - r.begin <= 4) continue;  // leaf
        const int mid = (r.begin + r.end) / 2;
        Node left, right;
        left.begin = r.begin;
        left.end = mid;
        right.begin = mid;
        right.end = r.end;
        const int li = int(nodes_.size());
        nodes_.push_back(left);
        const int ri = int(nodes_.size());
        nodes_.push_back(right);
        nodes_[size_t(r.node)].left = li;
        nodes_[size_t(r.node)].right = ri;
        stack.push_back({r.begin, mid, li});
        stack.push_back({mid, r.end, ri});
    }
}

void BoundingHierarchy::refit(const Points3& vertices) {
    // re-sort leaves by the longest axis at the root level for better quality:
    // order by Morton-ish lexicographic centroid sort once per refit
    std::sort(order_.begin(), order_.end(), [&](int a, int b) {
        const auto centroid = [&](int t) {
            return Vec3((vertices.col(triangles_[size_t(t)][0]) +
                         vertices.col(triangles_[size_t(t)][1]) +
                         vertices.col(triangles_[size_t(t)][2])) /
                        3.0);
        };
        const Vec3 ca = centroid(a), cb = centroid(b);
        if (ca.x() != cb.x()) return ca.x() < cb.x();
        if (ca.y() != cb.y()) return ca.y() < cb.y();
        return ca.z() < cb.z();
    });
    refit_node(0, vertices);
    dirty_ = false;
}

void BoundingHierarchy::refit_node(int id, const Points3& vertices) {
    Node& node = nodes_[size_t(id)];
    if (node.left < 0) {
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (int k = node.begin; k < node.end; ++k)
            for (int v = 0; v < 3; ++v) {
                const Vec3 p = vertices.col(triangles_[size_t(order_[size_t(k)])][size_t(v)]);
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
        node.lo = lo;
        node.hi = hi;
        return;
    }
    refit_node(node.left, vertices);
    refit_node(node.right, vertices);
    node.lo = nodes_[size_t(node.left)].lo.cwiseMin(nodes_[size_t(node.right)].lo);
    node.hi = nodes_[size_t(node.left)].hi.cwiseMax(nodes_[size_t(node.right)].hi);
}

void BoundingHierarchy::gather(const Vec3& p, double radius, std::vector<int>& out) const {
    out.clear();
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        const Node& node = nodes_[size_t(id)];
        const Vec3 clamped = p.cwiseMax(node.lo).cwiseMin(node.hi);
        if ((clamped - p).squaredNorm() > radius * radius) continue;
        if (node.left < 0) {
            for (int k = node.begin; k < node.end; ++k) out.push_back(order_[size_t(k)]);
        } else {
            stack.push_back(node.right);
            stack.push_back(node.left);
        }
    }
    std::sort(out.begin(), out.end());
}

bool BoundingHierarchy::boxes_consistent(const Points3& vertices) const {
    // every triangle box must be contained by its leaf and all ancestors
    bool ok = true;
    std::vector<std::pair<int, std::vector<int>>> stack{{0, {}}};
    while (!stack.empty() && ok) {
        auto [id, ancestors] = stack.back();
        stack.pop_back();
        const Node& node = nodes_[size_t(id)];
        if (node.left < 0) {
            for (int k = node.begin; k < node.end && ok; ++k) {
                Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
                Vec3 hi = -lo;
                for (int v = 0; v < 3; ++v) {
                    const Vec3 p = vertices.col(triangles_[size_t(order_[size_t(k)])][size_t(v)]);
                    lo = lo.cwiseMin(p);
                    hi = hi.cwiseMax(p);
                }
                for (int anc : ancestors) {
                    const Node& a = nodes_[size_t(anc)];
                    ok = ok && (lo.array() >= a.lo.array() - 1e-12).all() &&
                         (hi.array() <= a.hi.array() + 1e-12).all();
                }
                ok = ok && (lo.array() >= node.lo.array() - 1e-12).all() &&
                     (hi.array() <= node.hi.array() + 1e-12).all();
            }
        } else {
            auto chain = ancestors;
            chain.push_back(id);
            stack.push_back({node.left, chain});
            stack.push_back({node.right, chain});
        }
    }
    return ok;
}

namespace {

// Closest point on a triangle (Ericson, Real-Time Collision Detection).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

std::optional<Contact> node_triangle_contact(const Vec3& p, int node_id, int tri_id,
                                             const SurfaceMesh& mesh, double radius) {
    const auto& t = mesh.triangles[size_t(tri_id)];
    const Vec3 a = mesh.vertex(t[0]), b = mesh.vertex(t[1]), c = mesh.vertex(t[2]);
    const Vec3 q = closest_point_on_triangle(p, a, b, c);
    const double dist = (p - q).norm();
    if (dist > radius) return std::nullopt;
    Vec3 outward = (b - a).cross(c - a);
    const double n = outward.norm();
    if (n < 1e-15) return std::nullopt;
    outward /= n;
    const double side = (p - q).dot(outward);  // > 0: past the wall
    Contact contact;
    contact.triangle = tri_id;
    contact.wire_node = node_id;
    contact.depth_mm = std::max(0.0, side);
    contact.normal = -outward;
    return contact;
}

}  // namespace

std::vector<Contact> collide_step(const Guidewire& wire, const SurfaceMesh& mesh,
                                  const BoundingHierarchy& bvh) {
    if (bvh.dirty()) throw InputError("bounding hierarchy is stale; refit against the phase mesh");
    std::vector<Contact> contacts;
    std::vector<int> candidates;
    for (int i = 0; i < wire.count(); ++i) {
        bvh.gather(wire.nodes.col(i), wire.tip_radius_mm, candidates);
        for (int tri : candidates) {
            const auto c = node_triangle_contact(wire.nodes.col(i), i, tri, mesh, wire.tip_radius_mm);
            if (c) contacts.push_back(*c);
        }
    }
    return contacts;
}

namespace {

// Single follow-the-leader pass from the tip toward the base.
void follow_the_leader(Points3& nodes, double seg_len) {
    for (int i = int(nodes.cols()) - 2; i >= 0; --i) {
        Vec3 dir = nodes.col(i) - nodes.col(i + 1);
        const double len = dir.norm();
        if (len < 1e-15) dir = Vec3::UnitX();
        else dir /= len;
        nodes.col(i) = nodes.col(i + 1) + dir * seg_len;
    }
}

}  // namespace

Guidewire advance_guidewire(const Guidewire& wire, double advancement_mm, const SurfaceMesh& mesh,
                            const BoundingHierarchy& bvh) {
    if (advancement_mm < 0) throw InputError("advancement must be nonnegative");
    Guidewire out = wire;
    const int n = out.count();
    if (advancement_mm > 0) {
        Vec3 heading = out.nodes.col(n - 1) - out.nodes.col(n - 2);
        const double hl = heading.norm();
        heading = hl > 1e-15 ? Vec3(heading / hl) : Vec3::UnitX();
        out.nodes.col(n - 1) += heading * advancement_mm;
        follow_the_leader(out.nodes, out.segment_length_mm);
    }

    // projection / length-restoration loop
    for (int iter = 0; iter < 32; ++iter) {
        const std::vector<Contact> contacts = collide_step(out, mesh, bvh);
        double worst = 0.0;
        for (const auto& c : contacts) worst = std::max(worst, c.depth_mm);
        if (worst <= 0.0) break;
        for (const auto& c : contacts)
            if (c.depth_mm > 0.0) out.nodes.col(c.wire_node) += c.normal * (c.depth_mm + 1e-4);
        follow_the_leader(out.nodes, out.segment_length_mm);
    }
    return out;
}

namespace {

double next_uniform(std::uint64_t& state) {
    // splitmix64, deterministic across platforms
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
}

Vec3 position_on_branch(const VesselTree& tree, const Branch& branch, double arc) {
    const auto& pts = branch.point_ids;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const auto& p0 = tree.point(pts[i]);
        const auto& p1 = tree.point(pts[i + 1]);
        if (arc <= p1.arc_length_mm || i + 2 == pts.size()) {
            const double span = p1.arc_length_mm - p0.arc_length_mm;
            const double t = span > 0 ? std::clamp((arc - p0.arc_length_mm) / span, 0.0, 1.0) : 0.0;
            return (1.0 - t) * p0.pos_mm + t * p1.pos_mm;
        }
    }
    return tree.point(pts.back()).pos_mm;
}

}  // namespace

ContrastParticles inject_contrast(ContrastParticles p, const VesselTree& tree, int n) {
    int root = -1;
    for (const auto& b : tree.branches)
        if (b.parent_branch < 0) {
            root = b.id;
            break;
        }
    if (root < 0) throw InputError("tree has no root branch");
    for (int k = 0; k < n; ++k) {
        ContrastParticles::Particle particle;
        particle.branch_id = root;
        particle.arc_mm = 0.0;
        particle.position_mm = position_on_branch(tree, tree.branches[size_t(root)], 0.0);
        p.particles.push_back(particle);
    }
    p.injected += n;
    return p;
}

ContrastParticles advect_contrast(ContrastParticles p, const VesselTree& tree, double dt_s,
                                  double speed_mm_s) {
    if (!(dt_s > 0)) throw InputError("dt must be positive");

    // children at each branch tail
    std::vector<std::vector<int>> children_at_tail(tree.branches.size());
    for (const auto& bif : tree.bifurcations) {
        const int owner = tree.point(bif.point_id).branch_id;
        for (int cb : bif.child_branches) children_at_tail[size_t(owner)].push_back(cb);
    }

    std::vector<ContrastParticles::Particle> kept;
    kept.reserve(p.particles.size());
    for (auto particle : p.particles) {
        double advance = speed_mm_s * dt_s;
        bool alive = true;
        while (advance > 0 && alive) {
            const Branch& branch = tree.branches[size_t(particle.branch_id)];
            const double len = tree.branch_length_mm(branch.id);
            const double room = len - particle.arc_mm;
            if (advance <= room) {
                particle.arc_mm += advance;
                advance = 0;
                break;
            }
            advance -= room;
            const auto& kids = children_at_tail[size_t(branch.id)];
            if (kids.empty()) {
                alive = false;  // outflow at a terminal branch
                ++p.outflow;
                break;
            }
            // Murray-motivated split: probability proportional to r^3
            double total = 0.0;
            std::vector<double> weight(kids.size());
            for (std::size_t k = 0; k < kids.size(); ++k) {
                const Branch& child = tree.branches[size_t(kids[k])];
                const double r = tree.point(child.point_ids.front()).radius_mm;
                weight[k] = r * r * r;
                total += weight[k];
            }
            double u = next_uniform(p.rng_state) * total;
            std::size_t pick = 0;
            for (; pick + 1 < kids.size(); ++pick) {
                if (u < weight[pick]) break;
                u -= weight[pick];
            }
            particle.branch_id = kids[pick];
            particle.arc_mm = 0.0;
        }
        if (alive) {
            particle.position_mm =
                position_on_branch(tree, tree.branches[size_t(particle.branch_id)], particle.arc_mm);
            kept.push_back(particle);
        }
    }
    p.particles = std::move(kept);
    return p;
}

SimLog run_scenario(const Scenario& scenario, const MotionSequence& sequence,
                    const SurfaceMesh& surface, const VesselTree& tree, Guidewire wire) {
    wire.validate();
    for (const auto& tick : scenario.ticks)
        if (tick.phase < 0 || tick.phase >= int(sequence.frames.size()))
            throw InputError("scenario references an unknown phase " + std::to_string(tick.phase));

    BoundingHierarchy bvh(surface.triangles);
    ContrastParticles particles;
    particles.seed = scenario.seed;
    particles.rng_state = scenario.seed;

    SimLog log;
    SurfaceMesh phase_mesh = surface;
    for (int k = 0; k < int(scenario.ticks.size()); ++k) {
        const auto& tick = scenario.ticks[size_t(k)];
        phase_mesh.vertices = sequence.frames[size_t(tick.phase)].positions;
        bvh.mark_dirty();
        bvh.refit(phase_mesh.vertices);

        wire = advance_guidewire(wire, tick.advancement_mm, phase_mesh, bvh);
        const std::vector<Contact> contacts = collide_step(wire, phase_mesh, bvh);
        if (tick.inject) particles = inject_contrast(std::move(particles), tree, *tick.inject);
        particles = advect_contrast(std::move(particles), tree, scenario.dt_s,
                                    scenario.contrast_speed_mm_s);

        SimTickLog entry;
        entry.tick = k;
        entry.phase = tick.phase;
        entry.wire_nodes = wire.nodes;
        entry.contact_count = int(contacts.size());
        entry.particle_count = std::int64_t(particles.particles.size());
        entry.outflow_count = particles.outflow;
        log.ticks.push_back(std::move(entry));
    }
    return log;
}

}  // namespace artery
