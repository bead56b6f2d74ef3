#include "artery/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace artery {

bool Frame::orthonormal(double tol) const {
    return std::abs(tangent.norm() - 1.0) <= tol && std::abs(normal.norm() - 1.0) <= tol &&
           std::abs(binormal.norm() - 1.0) <= tol && std::abs(tangent.dot(normal)) <= tol &&
           std::abs(tangent.dot(binormal)) <= tol && std::abs(normal.dot(binormal)) <= tol;
}

double frame_rotation_angle_deg(const Frame& a, const Frame& b) {
    Mat3 ra, rb;
    ra.col(0) = a.tangent; ra.col(1) = a.normal; ra.col(2) = a.binormal;
    rb.col(0) = b.tangent; rb.col(1) = b.normal; rb.col(2) = b.binormal;
    const Mat3 rel = rb * ra.transpose();
    const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

namespace {

constexpr double kKappaEps = 1e-6;  // below this, Frenet is treated as undefined

Vec3 any_perpendicular(const Vec3& t) {
    const Vec3 ref = std::abs(t.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    return (ref - ref.dot(t) * t).normalized();
}

// Double-reflection rotation-minimizing transport of (tangent, normal).
Frame rmf_transport(const Frame& f, const Vec3& x1, const Vec3& t1) {
    Vec3 rl = f.normal, tl = f.tangent;
    const Vec3 v1 = x1 - f.origin_mm;
    const double c1 = v1.squaredNorm();
    if (c1 > 1e-24) {
        rl -= (2.0 / c1) * v1.dot(rl) * v1;
        tl -= (2.0 / c1) * v1.dot(tl) * v1;
    }
    const Vec3 v2 = t1 - tl;
    const double c2 = v2.squaredNorm();
    Vec3 n1 = rl;
    if (c2 > 1e-24) n1 -= (2.0 / c2) * v2.dot(rl) * v2;
    n1 = (n1 - n1.dot(t1) * t1).normalized();
    Frame out;
    out.origin_mm = x1;
    out.tangent = t1;
    out.normal = n1;
    out.binormal = t1.cross(n1);
    return out;
}

// Natural cubic spline through (knots, values), strictly increasing knots.
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(std::vector<double> knots, std::vector<double> values)
        : t_(std::move(knots)), y_(std::move(values)) {
        const int n = int(t_.size());
        m_.assign(size_t(n), 0.0);
        if (n < 3) return;
        std::vector<double> a(size_t(n), 0), b(size_t(n), 0), c(size_t(n), 0), d(size_t(n), 0);
        b[0] = 1.0;
        b[size_t(n) - 1] = 1.0;
        for (int i = 1; i + 1 < n; ++i) {
            const double h0 = t_[size_t(i)] - t_[size_t(i) - 1];
            const double h1 = t_[size_t(i) + 1] - t_[size_t(i)];
            a[size_t(i)] = h0 / 6.0;
            b[size_t(i)] = (h0 + h1) / 3.0;
            c[size_t(i)] = h1 / 6.0;
            d[size_t(i)] = (y_[size_t(i) + 1] - y_[size_t(i)]) / h1 -
                           (y_[size_t(i)] - y_[size_t(i) - 1]) / h0;
        }
        // Thomas algorithm
        for (int i = 1; i < n; ++i) {
            const double w = a[size_t(i)] / b[size_t(i) - 1];
            b[size_t(i)] -= w * c[size_t(i) - 1];
            d[size_t(i)] -= w * d[size_t(i) - 1];
        }
        m_[size_t(n) - 1] = d[size_t(n) - 1] / b[size_t(n) - 1];
        for (int i = n - 2; i >= 0; --i)
            m_[size_t(i)] = (d[size_t(i)] - c[size_t(i)] * m_[size_t(i) + 1]) / b[size_t(i)];
    }

    double operator()(double s) const { return eval(s, 0); }
    double deriv(double s) const { return eval(s, 1); }
    double deriv2(double s) const { return eval(s, 2); }

private:
    double eval(double s, int order) const {
        const int n = int(t_.size());
        if (n == 0) return 0.0;
        if (n == 1) return order == 0 ? y_[0] : 0.0;
        int i = int(std::upper_bound(t_.begin(), t_.end(), s) - t_.begin()) - 1;
        i = std::clamp(i, 0, n - 2);
        const double h = t_[size_t(i) + 1] - t_[size_t(i)];
        const double u = s - t_[size_t(i)];
        const double v = t_[size_t(i) + 1] - s;
        const double mi = m_[size_t(i)], mj = m_[size_t(i) + 1];
        const double yi = y_[size_t(i)], yj = y_[size_t(i) + 1];
        if (order == 0)
            return (mi * v * v * v + mj * u * u * u) / (6.0 * h) +
                   (yi / h - mi * h / 6.0) * v + (yj / h - mj * h / 6.0) * u;
        if (order == 1)
            return (-mi * v * v + mj * u * u) / (2.0 * h) + (yj - yi) / h - (mj - mi) * h / 6.0;
        return (mi * v + mj * u) / h;
    }

    std::vector<double> t_, y_;
    std::vector<double> m_;  // second derivatives at knots
};

struct Spline3 {
    CubicSpline x, y, z;
    Spline3() = default;
    Spline3(const std::vector<double>& s, const std::vector<Vec3>& p) {
        std::vector<double> xs(p.size()), ys(p.size()), zs(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            xs[i] = p[i].x();
            ys[i] = p[i].y();
            zs[i] = p[i].z();
        }
        x = CubicSpline(s, xs);
        y = CubicSpline(s, ys);
        z = CubicSpline(s, zs);
    }
    Vec3 eval(double s) const { return {x(s), y(s), z(s)}; }
    Vec3 deriv(double s) const { return {x.deriv(s), y.deriv(s), z.deriv(s)}; }
    Vec3 deriv2(double s) const { return {x.deriv2(s), y.deriv2(s), z.deriv2(s)}; }
    double curvature(double s) const {
        const Vec3 d1 = deriv(s), d2 = deriv2(s);
        const double n1 = d1.norm();
        if (n1 < 1e-12) return 0.0;
        return d1.cross(d2).norm() / (n1 * n1 * n1);
    }
};

bool segments_intersect_2d(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
    const double d1 = cross(b - a, c - a);
    const double d2 = cross(b - a, d - a);
    const double d3 = cross(d - c, a - c);
    const double d4 = cross(d - c, b - c);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

bool contour_self_intersects(const std::vector<Vec2>& contour) {
    const int n = int(contour.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;  // adjacent around the wrap
            if (segments_intersect_2d(contour[size_t(i)], contour[size_t((i + 1) % n)],
                                      contour[size_t(j)], contour[size_t((j + 1) % n)]))
                return true;
        }
    return false;
}

}  // namespace

std::vector<std::vector<CrossSection>> build_cross_sections(const VesselTree& tree,
                                                            double sections_per_mm) {
    if (!(sections_per_mm > 0)) throw InputError("sections_per_mm must be positive");
    tree.validate();

    std::vector<std::vector<CrossSection>> out(tree.branches.size());
    int global_section = 0;

    for (const auto& branch : tree.branches) {
        if (branch.point_ids.size() < 2) throw InputError("branch with fewer than 2 points");
        std::vector<Vec3> poly;
        std::vector<double> rad, arcs;
        double s = 0.0;
        for (std::size_t i = 0; i < branch.point_ids.size(); ++i) {
            const auto& p = tree.point(branch.point_ids[i]);
            if (i > 0) {
                const double step = (p.pos_mm - poly.back()).norm();
                if (step < 1e-12) throw InputError("branch with coincident consecutive points");
                s += step;
            }
            poly.push_back(p.pos_mm);
            rad.push_back(p.radius_mm);
            arcs.push_back(s);
        }
        const double total = s;

        const int n_sections = std::max(2, int(std::round(total * sections_per_mm)) + 1);
        const double ds = total / (n_sections - 1);

        // linear resample of position and radius by arc length
        std::vector<Vec3> pos(static_cast<size_t>(n_sections));
        std::vector<double> radius(static_cast<size_t>(n_sections));
        std::size_t seg = 0;
        for (int k = 0; k < n_sections; ++k) {
            const double sk = std::min(total, k * ds);
            while (seg + 2 < arcs.size() && arcs[seg + 1] < sk) ++seg;
            const double span = arcs[seg + 1] - arcs[seg];
            const double t = span > 0 ? (sk - arcs[seg]) / span : 0.0;
            pos[size_t(k)] = (1.0 - t) * poly[seg] + t * poly[seg + 1];
            radius[size_t(k)] = (1.0 - t) * rad[seg] + t * rad[seg + 1];
        }

        // tangents and discrete curvature
        std::vector<Vec3> tangent(static_cast<size_t>(n_sections));
        std::vector<Vec3> curv_vec(size_t(n_sections), Vec3::Zero());
        std::vector<double> kappa(size_t(n_sections), 0.0);
        for (int k = 0; k < n_sections; ++k) {
            const int a = std::max(0, k - 1), b = std::min(n_sections - 1, k + 1);
            Vec3 d = pos[size_t(b)] - pos[size_t(a)];
            if (d.norm() < 1e-12) d = Vec3::UnitZ();
            tangent[size_t(k)] = d.normalized();
            if (k > 0 && k + 1 < n_sections) {
                const Vec3 d1 = (pos[size_t(k + 1)] - pos[size_t(k - 1)]) / (2.0 * ds);
                const Vec3 d2 =
                    (pos[size_t(k + 1)] - 2.0 * pos[size_t(k)] + pos[size_t(k - 1)]) / (ds * ds);
                const double n1 = d1.norm();
                if (n1 > 1e-12) {
                    kappa[size_t(k)] = d1.cross(d2).norm() / (n1 * n1 * n1);
                    curv_vec[size_t(k)] = d2 - d2.dot(tangent[size_t(k)]) * tangent[size_t(k)];
                }
            }
        }

        // seed at the first well-defined Frenet frame
        int seed_idx = -1;
        for (int k = 0; k < n_sections; ++k)
            if (kappa[size_t(k)] >= kKappaEps && curv_vec[size_t(k)].norm() > 1e-12) {
                seed_idx = k;
                break;
            }

        std::vector<Frame> frames(static_cast<size_t>(n_sections));
        const auto frenet_or_transport = [&](const Frame& prev, int k) {
            Frame f = rmf_transport(prev, pos[size_t(k)], tangent[size_t(k)]);
            if (kappa[size_t(k)] >= kKappaEps && curv_vec[size_t(k)].norm() > 1e-12) {
                Vec3 n = curv_vec[size_t(k)];
                n = (n - n.dot(f.tangent) * f.tangent).normalized();
                if (n.dot(f.normal) < 0.0) n = -n;  // sign chosen to minimize twist
                f.normal = n;
                f.binormal = f.tangent.cross(n);
            }
            return f;
        };

        if (seed_idx < 0) {
            Frame f;
            f.origin_mm = pos[0];
            f.tangent = tangent[0];
            f.normal = any_perpendicular(tangent[0]);
            f.binormal = f.tangent.cross(f.normal);
            frames[0] = f;
            for (int k = 1; k < n_sections; ++k)
                frames[size_t(k)] = rmf_transport(frames[size_t(k) - 1], pos[size_t(k)], tangent[size_t(k)]);
        } else {
            Frame f;
            f.origin_mm = pos[size_t(seed_idx)];
            f.tangent = tangent[size_t(seed_idx)];
            f.normal = (curv_vec[size_t(seed_idx)] -
                        curv_vec[size_t(seed_idx)].dot(f.tangent) * f.tangent)
                           .normalized();
            f.binormal = f.tangent.cross(f.normal);
            frames[size_t(seed_idx)] = f;
            for (int k = seed_idx + 1; k < n_sections; ++k)
                frames[size_t(k)] = frenet_or_transport(frames[size_t(k) - 1], k);
            for (int k = seed_idx - 1; k >= 0; --k)
                frames[size_t(k)] = frenet_or_transport(frames[size_t(k) + 1], k);
        }

        auto& sections = out[size_t(branch.id)];
        sections.reserve(size_t(n_sections));
        for (int k = 0; k < n_sections; ++k) {
            CrossSection cs;
            cs.frame = frames[size_t(k)];
            cs.a_mm = cs.b_mm = radius[size_t(k)];
            cs.area0_mm2 = M_PI * cs.a_mm * cs.b_mm;
            cs.arc_mm = std::min(total, k * ds);
            cs.branch_id = branch.id;
            cs.section_index = global_section++;
            const int nc = 64;
            cs.contour.reserve(nc);
            for (int j = 0; j < nc; ++j) {
                const double th = 2.0 * M_PI * j / nc;
                cs.contour.emplace_back(cs.a_mm * std::cos(th), cs.b_mm * std::sin(th));
            }
            sections.push_back(std::move(cs));
        }
    }
    return out;
}

namespace {

struct EdgeKey {
    int a, b;
    bool operator<(const EdgeKey& o) const { return a != o.a ? a < o.a : b < o.b; }
};

}  // namespace

bool surface_is_closed_manifold(const SurfaceMesh& mesh,
                                std::vector<std::array<int, 2>>* boundary_edges) {
    if (boundary_edges) boundary_edges->clear();
    std::map<EdgeKey, int> directed;  // (u,v) -> count
    for (const auto& t : mesh.triangles) {
        const Vec3 a = mesh.vertex(t[0]), b = mesh.vertex(t[1]), c = mesh.vertex(t[2]);
        if (0.5 * (b - a).cross(c - a).norm() <= 1e-12) return false;  // degenerate face
        for (int e = 0; e < 3; ++e) {
            const int u = t[size_t(e)], v = t[size_t((e + 1) % 3)];
            if (u == v) return false;
            if (++directed[{u, v}] > 1) return false;  // duplicated orientation
        }
    }
    bool closed = true;
    for (const auto& [key, cnt] : directed) {
        (void)cnt;
        if (!directed.count({key.b, key.a})) {
            closed = false;
            if (boundary_edges) boundary_edges->push_back({key.a, key.b});
        }
    }
    return closed;
}

int euler_characteristic(const SurfaceMesh& mesh) {
    std::set<EdgeKey> edges;
    std::set<int> verts;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            const int u = t[size_t(e)], v = t[size_t((e + 1) % 3)];
            edges.insert({std::min(u, v), std::max(u, v)});
            verts.insert(u);
        }
    return int(verts.size()) - int(edges.size()) + int(mesh.triangles.size());
}

double surface_area_mm2(const SurfaceMesh& mesh) {
    double area = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3 a = mesh.vertex(t[0]), b = mesh.vertex(t[1]), c = mesh.vertex(t[2]);
        area += 0.5 * (b - a).cross(c - a).norm();
    }
    return area;
}

namespace {

struct BranchLoft {
    SurfaceMesh mesh;           // local indices
    int start_cap_center = -1;  // local vertex id
    int end_cap_center = -1;
};

// Lofts one branch into a capped tube; rings carry section tags.
BranchLoft loft_branch(const std::vector<CrossSection>& sections, const MeshSizingParams& sizing) {
    sizing.validate();
    if (sections.size() < 2) throw InputError("loft needs at least 2 sections per branch");
    for (const auto& cs : sections) {
        if (!(cs.a_mm > 0) || !(cs.b_mm > 0)) throw InputError("nonpositive section semi-axes");
        if (contour_self_intersects(cs.contour)) throw InputError("self-intersecting input contour");
    }

    std::vector<double> knots;
    std::vector<Vec3> origins;
    std::vector<double> avals, bvals;
    for (const auto& cs : sections) {
        if (!knots.empty() && cs.arc_mm <= knots.back() + 1e-12) continue;  // keep knots strict
        knots.push_back(cs.arc_mm);
        origins.push_back(cs.frame.origin_mm);
        avals.push_back(cs.a_mm);
        bvals.push_back(cs.b_mm);
    }
    if (knots.size() < 2) throw InputError("degenerate section arc range");
    const double total = knots.back();
    const Spline3 path(knots, origins);
    const CubicSpline a_of_s(knots, avals), b_of_s(knots, bvals);

    // circumferential segment count from the tightest local sizing
    int m = 8;
    for (double s = 0.0; s <= total + 1e-12; s += total / 64.0) {
        const double a = std::max(1e-9, a_of_s(s)), b = std::max(1e-9, b_of_s(s));
        const double circ = M_PI * (3.0 * (a + b) - std::sqrt((3.0 * a + b) * (a + 3.0 * b)));
        const double h = local_mesh_size(1.0 / std::min(a, b), sizing);
        m = std::max(m, int(std::ceil(circ / h)));
    }

    // ring arc positions from longitudinal curvature sizing
    std::vector<double> ring_arcs{0.0};
    while (true) {
        const double s = ring_arcs.back();
        const double h = local_mesh_size(path.curvature(s), sizing);
        const double nxt = s + h;
        if (nxt >= total - 0.5 * h) {
            ring_arcs.push_back(total);
            break;
        }
        ring_arcs.push_back(nxt);
    }
    if (ring_arcs.size() < 2) ring_arcs = {0.0, total};

    BranchLoft out;
    SurfaceMesh& mesh = out.mesh;
    const int n_rings = int(ring_arcs.size());
    mesh.vertices.resize(3, n_rings * m + 2);
    const int branch_id = sections.front().branch_id;

    Frame prev;
    prev.origin_mm = sections.front().frame.origin_mm;
    prev.tangent = sections.front().frame.tangent;
    prev.normal = sections.front().frame.normal;
    prev.binormal = sections.front().frame.binormal;

    for (int i = 0; i < n_rings; ++i) {
        const double s = ring_arcs[size_t(i)];
        Vec3 t = path.deriv(s);
        if (t.norm() < 1e-12) t = prev.tangent;
        t.normalize();
        const Frame f = i == 0 ? prev : rmf_transport(prev, path.eval(s), t);
        prev = f;

        const double a = std::max(1e-9, a_of_s(s)), b = std::max(1e-9, b_of_s(s));
        // nearest input section for this ring
        int nearest = 0;
        double best = std::abs(sections[0].arc_mm - s);
        for (std::size_t k = 1; k < sections.size(); ++k) {
            const double d = std::abs(sections[k].arc_mm - s);
            if (d < best) {
                best = d;
                nearest = int(k);
            }
        }

        RingInfo ring;
        ring.branch_id = branch_id;
        ring.ring_index = i;
        ring.section_index = sections[size_t(nearest)].section_index;
        ring.arc_mm = s;
        ring.origin_mm = f.origin_mm;
        ring.normal = f.normal;
        ring.binormal = f.binormal;
        for (int j = 0; j < m; ++j) {
            const double th = 2.0 * M_PI * j / m;
            const int vid = i * m + j;
            mesh.vertices.col(vid) =
                f.origin_mm + a * std::cos(th) * f.normal + b * std::sin(th) * f.binormal;
            ring.vertex_ids.push_back(vid);
        }
        mesh.rings.push_back(std::move(ring));
    }

    mesh.vertex_ring.assign(size_t(mesh.vertices.cols()), -1);
    mesh.vertex_section.assign(size_t(mesh.vertices.cols()), -1);
    for (const auto& ring : mesh.rings)
        for (int vid : ring.vertex_ids) {
            mesh.vertex_ring[size_t(vid)] = ring.ring_index;
            mesh.vertex_section[size_t(vid)] = ring.section_index;
        }

    for (int i = 0; i + 1 < n_rings; ++i)
        for (int j = 0; j < m; ++j) {
            const int a0 = i * m + j, a1 = i * m + (j + 1) % m;
            const int b0 = (i + 1) * m + j, b1 = (i + 1) * m + (j + 1) % m;
            mesh.triangles.push_back({a0, a1, b1});
            mesh.triangles.push_back({a0, b1, b0});
        }

    // caps: fans about the ring origins
    out.start_cap_center = n_rings * m;
    out.end_cap_center = n_rings * m + 1;
    mesh.vertices.col(out.start_cap_center) = mesh.rings.front().origin_mm;
    mesh.vertices.col(out.end_cap_center) = mesh.rings.back().origin_mm;
    for (int j = 0; j < m; ++j) {
        mesh.triangles.push_back({out.start_cap_center, (j + 1) % m, j});
        mesh.triangles.push_back({out.end_cap_center, (n_rings - 1) * m + j,
                                  (n_rings - 1) * m + (j + 1) % m});
    }
    return out;
}

}  // namespace

SurfaceMesh loft_surface(const std::vector<CrossSection>& sections, const MeshSizingParams& sizing) {
    return loft_branch(sections, sizing).mesh;
}

namespace {

// Appends src into dst, remapping vertex/ring indices. Returns vertex offset.
int append_mesh(SurfaceMesh& dst, const SurfaceMesh& src) {
    const int off = dst.vertex_count();
    const int ring_off = int(dst.rings.size());
    Points3 merged(3, off + src.vertex_count());
    if (off > 0) merged.leftCols(off) = dst.vertices;
    merged.rightCols(src.vertex_count()) = src.vertices;
    dst.vertices = std::move(merged);
    for (const auto& t : src.triangles)
        dst.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
    for (int r : src.vertex_ring) dst.vertex_ring.push_back(r < 0 ? -1 : r + ring_off);
    for (int s : src.vertex_section) dst.vertex_section.push_back(s);
    for (RingInfo ring : src.rings) {
        for (int& vid : ring.vertex_ids) vid += off;
        dst.rings.push_back(std::move(ring));
    }
    return off;
}

// Orders unmatched directed edges into loops. Returns false on failure.
bool boundary_loops(const std::vector<std::array<int, 3>>& triangles,
                    std::vector<std::vector<int>>& loops) {
    std::map<EdgeKey, int> directed;
    for (const auto& t : triangles)
        for (int e = 0; e < 3; ++e) ++directed[{t[size_t(e)], t[size_t((e + 1) % 3)]}];
    std::map<int, int> next;  // boundary edge successor: u -> v where (u,v) unmatched
    for (const auto& [key, cnt] : directed) {
        if (cnt != 1 || directed.count({key.b, key.a})) continue;
        if (next.count(key.a)) return false;  // non-simple boundary
        next[key.a] = key.b;
    }
    loops.clear();
    std::set<int> used;
    for (const auto& [start, _] : next) {
        if (used.count(start)) continue;
        std::vector<int> loop;
        int cur = start;
        while (true) {
            if (used.count(cur)) return false;
            used.insert(cur);
            loop.push_back(cur);
            auto it = next.find(cur);
            if (it == next.end()) return false;  // open chain
            cur = it->second;
            if (cur == start) break;
        }
        loops.push_back(std::move(loop));
    }
    return true;
}

}  // namespace

SurfaceMesh loft_tree_surface(const std::vector<std::vector<CrossSection>>& branch_sections,
                              const VesselTree& tree, const MeshSizingParams& sizing) {
    if (branch_sections.size() != tree.branches.size())
        throw InputError("section groups do not match tree branches");

    // bifurcation anchor per branch
    std::vector<int> anchor_point(tree.branches.size(), -1);
    for (const auto& bif : tree.bifurcations)
        for (int cb : bif.child_branches) anchor_point[size_t(cb)] = bif.point_id;

    // parents first
    std::vector<int> order(tree.branches.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        int da = 0, db = 0;
        for (int cur = a; tree.branches[size_t(cur)].parent_branch >= 0;
             cur = tree.branches[size_t(cur)].parent_branch)
            ++da;
        for (int cur = b; tree.branches[size_t(cur)].parent_branch >= 0;
             cur = tree.branches[size_t(cur)].parent_branch)
            ++db;
        return da < db;
    });

    SurfaceMesh combined;
    combined.vertices.resize(3, 0);

    for (int bid : order) {
        const auto& sections = branch_sections[size_t(bid)];
        if (sections.empty()) continue;
        const int anchor = anchor_point[size_t(bid)];

        if (anchor < 0) {
            append_mesh(combined, loft_branch(sections, sizing).mesh);
            continue;
        }

        const Vec3 anchor_pos = tree.point(anchor).pos_mm;
        const double parent_r = tree.point(anchor).radius_mm;

        // trim child sections that sit inside the parent tube
        std::vector<CrossSection> trimmed;
        for (const auto& cs : sections)
            if ((cs.frame.origin_mm - anchor_pos).norm() > 1.1 * parent_r) trimmed.push_back(cs);
        bool stitch = trimmed.size() >= 2;
        if (!stitch) trimmed = sections;
        const double arc_base = trimmed.front().arc_mm;
        for (auto& cs : trimmed) cs.arc_mm -= arc_base;

        BranchLoft child = loft_branch(trimmed, sizing);
        if (!stitch) {
            append_mesh(combined, child.mesh);
            continue;
        }

        // stitch attempt on copies; fall back to the capped tube on any failure
        SurfaceMesh backup = combined;
        const RingInfo& first_ring = child.mesh.rings.front();
        Vec3 axis = first_ring.origin_mm - anchor_pos;
        if (axis.norm() < 1e-9) {
            append_mesh(combined, child.mesh);
            continue;
        }
        axis.normalize();
        double r_open = 0.0;
        for (int vid : first_ring.vertex_ids)
            r_open = std::max(r_open, (child.mesh.vertex(vid) - first_ring.origin_mm).norm());
        r_open *= 1.15;

        // delete parent-wall triangles covered by the child opening
        std::vector<std::array<int, 3>> kept;
        int removed = 0;
        for (const auto& t : combined.triangles) {
            bool inside = true;
            for (int v = 0; v < 3 && inside; ++v) {
                const Vec3 p = combined.vertex(t[size_t(v)]);
                const Vec3 rel = p - anchor_pos;
                const double u = rel.dot(axis);
                const double rho = (rel - u * axis).norm();
                inside = rho < r_open && u > -0.25 * parent_r;
            }
            if (inside) ++removed;
            else kept.push_back(t);
        }

        bool ok = removed > 0;
        std::vector<std::vector<int>> loops;
        if (ok) {
            std::vector<std::array<int, 3>> probe = kept;  // hole loop lives in the kept set
            ok = boundary_loops(probe, loops) && loops.size() == 1 && loops[0].size() >= 3;
        }

        if (ok) {
            combined.triangles = kept;
            const int off = append_mesh(combined, child.mesh);
            // drop the child's start cap
            const int cap = child.start_cap_center + off;
            std::erase_if(combined.triangles, [&](const std::array<int, 3>& t) {
                return t[0] == cap || t[1] == cap || t[2] == cap;
            });

            // band between the hole loop and the child's first ring
            const auto& hole = loops[0];
            std::vector<int> ring_loop;
            for (int vid : first_ring.vertex_ids) ring_loop.push_back(vid + off);
            std::reverse(ring_loop.begin(), ring_loop.end());  // opposite sense around the axis

            const Vec3 e1 = any_perpendicular(axis);
            const Vec3 e2 = axis.cross(e1);
            const auto angle_of = [&](int vid) {
                const Vec3 rel = combined.vertex(vid) - anchor_pos;
                return std::atan2(rel.dot(e2), rel.dot(e1));
            };
            const auto unwrap = [&](const std::vector<int>& loop, double start) {
                std::vector<double> ang(loop.size());
                double prev = start;
                for (std::size_t i = 0; i < loop.size(); ++i) {
                    double a = angle_of(loop[i]);
                    while (a < prev - M_PI) a += 2.0 * M_PI;
                    while (a > prev + M_PI) a -= 2.0 * M_PI;
                    ang[i] = a;
                    prev = a;
                }
                return ang;
            };

            // rotate the ring so it starts near the hole loop start
            std::vector<int> u = ring_loop;
            const double a0 = angle_of(hole[0]);
            std::size_t best_k = 0;
            double best_d = 1e300;
            for (std::size_t kk = 0; kk < u.size(); ++kk) {
                double d = std::abs(std::remainder(angle_of(u[kk]) - a0, 2.0 * M_PI));
                if (d < best_d) {
                    best_d = d;
                    best_k = kk;
                }
            }
            std::rotate(u.begin(), u.begin() + long(best_k), u.end());

            std::vector<double> au = unwrap(u, a0);
            std::vector<double> av = unwrap(hole, a0);
            // direction check: both unwraps should advance the same way
            if ((au.back() - au.front()) * (av.back() - av.front()) < 0.0) {
                std::reverse(u.begin(), u.end());
                std::rotate(u.begin(), u.end() - 1, u.end());
                au = unwrap(u, a0);
            }

            const std::size_t m = u.size(), n = hole.size();
            std::size_t i = 0, j = 0;
            while (i < m || j < n) {
                const double next_u = i + 1 < m ? au[i + 1] : 1e300;
                const double next_v = j + 1 < n ? av[j + 1] : 1e300;
                if (i < m && (j >= n || next_u <= next_v)) {
                    combined.triangles.push_back({u[i], u[(i + 1) % m], hole[j % n]});
                    ++i;
                } else {
                    combined.triangles.push_back({u[i % m], hole[(j + 1) % n], hole[j % n]});
                    ++j;
                }
            }

            if (!surface_is_closed_manifold(combined)) {
                combined = std::move(backup);
                append_mesh(combined, child.mesh);
            }
        } else {
            append_mesh(combined, child.mesh);
        }
    }
    return combined;
}

}  // namespace artery
