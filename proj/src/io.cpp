#include "artery/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "raw volume/weight formats are little-endian");

namespace artery {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw InputError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

void dump_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << j.dump(2) << '\n';
}

std::string sibling(const std::string& json_path, const std::string& old_suffix,
                    const std::string& new_suffix) {
    if (json_path.size() < old_suffix.size() ||
        json_path.substr(json_path.size() - old_suffix.size()) != old_suffix)
        throw InputError("expected path ending in " + old_suffix + ": " + json_path);
    return json_path.substr(0, json_path.size() - old_suffix.size()) + new_suffix;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw InputError("expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void save_volume(const VoxelVolume& volume, const std::string& json_path) {
    volume.validate();
    const std::string raw_path = sibling(json_path, ".vol.json", ".raw");
    json j;
    j["dims"] = volume.dims;
    j["spacing_mm"] = vec3_to_json(volume.spacing_mm);
    j["origin_mm"] = vec3_to_json(volume.origin_mm);
    j["dtype"] = "f32";
    j["data"] = fs::path(raw_path).filename().string();
    dump_json(j, json_path);

    std::ofstream raw(raw_path, std::ios::binary);
    if (!raw) throw InputError("cannot write " + raw_path);
    raw.write(reinterpret_cast<const char*>(volume.values.data()),
              std::streamsize(volume.values.size() * sizeof(float)));
}

VoxelVolume load_volume(const std::string& json_path) {
    const json j = load_json(json_path);
    VoxelVolume v;
    const auto dims = j.at("dims");
    for (int a = 0; a < 3; ++a) v.dims[size_t(a)] = dims.at(size_t(a)).get<int>();
    v.spacing_mm = vec3_from_json(j.at("spacing_mm"));
    v.origin_mm = vec3_from_json(j.at("origin_mm"));
    const std::string dtype = j.at("dtype").get<std::string>();
    if (dtype != "f32") throw InputError("unknown dtype \"" + dtype + "\" (expected f32)");

    const fs::path raw_path = fs::path(json_path).parent_path() / j.at("data").get<std::string>();
    std::ifstream raw(raw_path, std::ios::binary | std::ios::ate);
    if (!raw) throw InputError("cannot open raw file " + raw_path.string());
    const std::int64_t bytes = raw.tellg();
    const std::int64_t expected = v.size() * std::int64_t(sizeof(float));
    if (bytes != expected)
        throw InputError("raw byte count " + std::to_string(bytes) + " does not match dims product " +
                         std::to_string(expected));
    raw.seekg(0);
    v.values.resize(size_t(v.size()));
    raw.read(reinterpret_cast<char*>(v.values.data()), expected);
    v.validate();
    return v;
}

void save_tree(const VesselTree& tree, const std::string& path) {
    json j;
    auto& points = j["points"] = json::array();
    for (const auto& p : tree.points) {
        json e;
        e["id"] = p.id;
        e["pos_mm"] = vec3_to_json(p.pos_mm);
        e["radius_mm"] = p.radius_mm;
        e["arc_length_mm"] = p.arc_length_mm;
        e["branch_id"] = p.branch_id;
        if (p.parent_id) e["parent_id"] = *p.parent_id;
        else e["parent_id"] = nullptr;
        points.push_back(std::move(e));
    }
    auto& branches = j["branches"] = json::array();
    for (const auto& b : tree.branches) {
        json e;
        e["id"] = b.id;
        e["point_ids"] = b.point_ids;
        e["parent_branch"] = b.parent_branch;
        branches.push_back(std::move(e));
    }
    auto& bifurcations = j["bifurcations"] = json::array();
    for (const auto& b : tree.bifurcations) {
        json e;
        e["point_id"] = b.point_id;
        e["child_branches"] = b.child_branches;
        e["angles_deg"] = b.angles_deg;
        e["murray_residual_mm3"] = b.murray_residual_mm3;
        e["main_child"] = b.main_child;
        bifurcations.push_back(std::move(e));
    }
    dump_json(j, path);
}

VesselTree load_tree(const std::string& path) {
    const json j = load_json(path);
    VesselTree tree;
    for (const auto& e : j.at("points")) {
        CenterlinePoint p;
        p.id = e.at("id").get<int>();
        p.pos_mm = vec3_from_json(e.at("pos_mm"));
        p.radius_mm = e.at("radius_mm").get<double>();
        p.arc_length_mm = e.at("arc_length_mm").get<double>();
        p.branch_id = e.at("branch_id").get<int>();
        if (!e.at("parent_id").is_null()) p.parent_id = e.at("parent_id").get<int>();
        tree.points.push_back(p);
    }
    for (const auto& e : j.at("branches")) {
        Branch b;
        b.id = e.at("id").get<int>();
        b.point_ids = e.at("point_ids").get<std::vector<int>>();
        b.parent_branch = e.at("parent_branch").get<int>();
        tree.branches.push_back(std::move(b));
    }
    for (const auto& e : j.at("bifurcations")) {
        Bifurcation b;
        b.point_id = e.at("point_id").get<int>();
        b.child_branches = e.at("child_branches").get<std::vector<int>>();
        b.angles_deg = e.at("angles_deg").get<std::vector<double>>();
        b.murray_residual_mm3 = e.at("murray_residual_mm3").get<double>();
        b.main_child = e.at("main_child").get<int>();
        tree.bifurcations.push_back(std::move(b));
    }
    tree.validate();
    return tree;
}

void save_surface(const SurfaceMesh& mesh, const std::string& obj_path) {
    std::ofstream out(obj_path, std::ios::binary);
    if (!out) throw InputError("cannot write " + obj_path);
    char line[160];
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", mesh.vertices(0, v),
                      mesh.vertices(1, v), mesh.vertices(2, v));
        out << line;
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(line, sizeof line, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out << line;
    }
    out.close();

    json j;
    j["vertex_ring"] = mesh.vertex_ring;
    j["vertex_section"] = mesh.vertex_section;
    auto& rings = j["rings"] = json::array();
    for (const auto& r : mesh.rings) {
        json e;
        e["branch_id"] = r.branch_id;
        e["ring_index"] = r.ring_index;
        e["section_index"] = r.section_index;
        e["arc_mm"] = r.arc_mm;
        e["origin_mm"] = vec3_to_json(r.origin_mm);
        e["normal"] = vec3_to_json(r.normal);
        e["binormal"] = vec3_to_json(r.binormal);
        e["vertex_ids"] = r.vertex_ids;
        rings.push_back(std::move(e));
    }
    dump_json(j, obj_path + ".rings.json");
}

SurfaceMesh load_surface(const std::string& obj_path) {
    std::ifstream in(obj_path);
    if (!in) throw InputError("cannot open " + obj_path);
    std::vector<Vec3> verts;
    SurfaceMesh mesh;
    std::string token;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        if (!(ls >> token)) continue;
        if (token == "v") {
            Vec3 p;
            ls >> p.x() >> p.y() >> p.z();
            verts.push_back(p);
        } else if (token == "f") {
            std::array<int, 3> f;
            ls >> f[0] >> f[1] >> f[2];
            mesh.triangles.push_back({f[0] - 1, f[1] - 1, f[2] - 1});
        }
    }
    mesh.vertices.resize(3, int(verts.size()));
    for (int i = 0; i < int(verts.size()); ++i) mesh.vertices.col(i) = verts[size_t(i)];
    mesh.vertex_ring.assign(verts.size(), -1);
    mesh.vertex_section.assign(verts.size(), -1);

    const std::string rings_path = obj_path + ".rings.json";
    if (fs::exists(rings_path)) {
        const json j = load_json(rings_path);
        mesh.vertex_ring = j.at("vertex_ring").get<std::vector<int>>();
        mesh.vertex_section = j.at("vertex_section").get<std::vector<int>>();
        for (const auto& e : j.at("rings")) {
            RingInfo r;
            r.branch_id = e.at("branch_id").get<int>();
            r.ring_index = e.at("ring_index").get<int>();
            r.section_index = e.at("section_index").get<int>();
            r.arc_mm = e.at("arc_mm").get<double>();
            r.origin_mm = vec3_from_json(e.at("origin_mm"));
            r.normal = vec3_from_json(e.at("normal"));
            r.binormal = vec3_from_json(e.at("binormal"));
            r.vertex_ids = e.at("vertex_ids").get<std::vector<int>>();
            mesh.rings.push_back(std::move(r));
        }
    }
    return mesh;
}

void save_tetmesh(const TetMesh& mesh, const std::string& path) {
    json j;
    auto& nodes = j["nodes"] = json::array();
    for (int i = 0; i < mesh.node_count(); ++i) nodes.push_back(vec3_to_json(mesh.nodes.col(i)));
    auto& tets = j["tets"] = json::array();
    for (const auto& t : mesh.tets) tets.push_back(json::array({t[0], t[1], t[2], t[3]}));
    j["wall_node_ids"] = mesh.wall_node_ids;
    j["centerline_node_ids"] = mesh.centerline_node_ids;
    j["node_branch"] = mesh.node_branch;
    j["node_arc_mm"] = mesh.node_arc_mm;
    j["surface_to_node"] = mesh.surface_to_node;
    dump_json(j, path);
}

TetMesh load_tetmesh(const std::string& path) {
    const json j = load_json(path);
    TetMesh mesh;
    const auto& nodes = j.at("nodes");
    mesh.nodes.resize(3, int(nodes.size()));
    for (int i = 0; i < int(nodes.size()); ++i)
        mesh.nodes.col(i) = vec3_from_json(nodes.at(size_t(i)));
    for (const auto& t : j.at("tets"))
        mesh.tets.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>(),
                             t.at(3).get<int>()});
    mesh.wall_node_ids = j.at("wall_node_ids").get<std::vector<int>>();
    mesh.centerline_node_ids = j.at("centerline_node_ids").get<std::vector<int>>();
    mesh.node_branch = j.at("node_branch").get<std::vector<int>>();
    mesh.node_arc_mm = j.at("node_arc_mm").get<std::vector<double>>();
    mesh.surface_to_node = j.at("surface_to_node").get<std::vector<int>>();
    mesh.validate();
    return mesh;
}

void save_weights(const WeightMatrix& weights, const std::string& json_path) {
    const std::string raw_path = sibling(json_path, ".wts.json", ".wts.raw");
    json j;
    j["n_rows"] = weights.rows();
    j["n_handles"] = weights.handles();
    j["data"] = fs::path(raw_path).filename().string();
    j["fallback_rows"] = weights.fallback_rows;
    dump_json(j, json_path);

    std::ofstream raw(raw_path, std::ios::binary);
    if (!raw) throw InputError("cannot write " + raw_path);
    for (int r = 0; r < weights.rows(); ++r)
        for (int c = 0; c < weights.handles(); ++c) {
            const double v = weights.values(r, c);
            raw.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
}

WeightMatrix load_weights(const std::string& json_path) {
    const json j = load_json(json_path);
    WeightMatrix w;
    const int rows = j.at("n_rows").get<int>();
    const int cols = j.at("n_handles").get<int>();
    w.fallback_rows = j.at("fallback_rows").get<std::vector<int>>();
    const fs::path raw_path = fs::path(json_path).parent_path() / j.at("data").get<std::string>();
    std::ifstream raw(raw_path, std::ios::binary | std::ios::ate);
    if (!raw) throw InputError("cannot open raw file " + raw_path.string());
    const std::int64_t bytes = raw.tellg();
    const std::int64_t expected = std::int64_t(rows) * cols * std::int64_t(sizeof(double));
    if (bytes != expected)
        throw InputError("raw byte count " + std::to_string(bytes) + " does not match header " +
                         std::to_string(expected));
    raw.seekg(0);
    w.values.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double v = 0;
            raw.read(reinterpret_cast<char*>(&v), sizeof v);
            w.values(r, c) = v;
        }
    return w;
}

void save_sequence(const MotionSequence& seq, const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    json j;
    auto& frames = j["frames"] = json::array();
    for (const auto& frame : seq.frames) {
        char fname[64];
        std::snprintf(fname, sizeof fname, "%s_frame_%03d.obj", name.c_str(), frame.frame_index);
        SurfaceMesh m;
        m.vertices = frame.positions;
        m.triangles = seq.triangles;
        m.vertex_ring.assign(size_t(frame.positions.cols()), -1);
        m.vertex_section.assign(size_t(frame.positions.cols()), -1);
        save_surface(m, (fs::path(dir) / fname).string());
        json e;
        e["frame_index"] = frame.frame_index;
        e["t"] = frame.t;
        e["rr_percent"] = frame.rr_percent;
        e["mesh"] = fname;
        frames.push_back(std::move(e));
    }
    j["period_T"] = seq.period_T;
    j["periodicity_gap"] = seq.periodicity_gap;
    j["subdivision"] = seq.subdivision;
    dump_json(j, (fs::path(dir) / (name + ".seq.json")).string());
}

std::vector<SurfaceMesh> load_sequence_meshes(const std::string& seq_json_path) {
    const json j = load_json(seq_json_path);
    const fs::path dir = fs::path(seq_json_path).parent_path();
    std::vector<SurfaceMesh> meshes;
    for (const auto& e : j.at("frames"))
        meshes.push_back(load_surface((dir / e.at("mesh").get<std::string>()).string()));
    return meshes;
}

namespace {

const char* violation_kind_name(Violation::Kind kind) {
    switch (kind) {
        case Violation::Kind::BendAngle: return "bend_angle";
        case Violation::Kind::CurvatureRadius: return "curvature_radius";
        case Violation::Kind::Strain: return "strain";
        case Violation::Kind::FrameDisplacement: return "frame_displacement";
        case Violation::Kind::Periodicity: return "periodicity";
    }
    return "unknown";
}

}  // namespace

void save_report(const ViolationReport& report, const SequenceEnergy& energy,
                 const std::string& path) {
    json j;
    auto& items = j["violations"] = json::array();
    for (const auto& v : report.items) {
        json e;
        e["kind"] = violation_kind_name(v.kind);
        e["frame"] = v.frame_index;
        e["location"] = v.location;
        e["value"] = v.value;
        e["limit"] = v.limit;
        items.push_back(std::move(e));
    }
    j["max_bend_deg"] = report.max_bend_deg;
    j["min_curvature_radius_mm"] =
        std::isfinite(report.min_curvature_radius_mm) ? json(report.min_curvature_radius_mm)
                                                      : json(nullptr);
    j["max_strain"] = report.max_strain;
    j["max_stress_mpa"] = report.max_stress_mpa;
    j["max_frame_displacement_mm"] = report.max_frame_displacement_mm;
    j["periodicity_gap"] = report.periodicity_gap;
    j["e_temp"] = energy.e_temp;
    j["e_spatial"] = energy.e_spatial;
    j["e_total"] = energy.e_total;
    dump_json(j, path);
}

void save_scenario(const Scenario& scenario, const std::string& path) {
    json j;
    j["seed"] = scenario.seed;
    j["dt_s"] = scenario.dt_s;
    j["contrast_speed_mm_s"] = scenario.contrast_speed_mm_s;
    auto& ticks = j["ticks"] = json::array();
    for (const auto& t : scenario.ticks) {
        json e;
        e["phase"] = t.phase;
        e["advancement_mm"] = t.advancement_mm;
        if (t.inject) e["inject"] = *t.inject;
        ticks.push_back(std::move(e));
    }
    dump_json(j, path);
}

Scenario load_scenario(const std::string& path) {
    const json j = load_json(path);
    Scenario s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.dt_s = j.at("dt_s").get<double>();
    s.contrast_speed_mm_s = j.at("contrast_speed_mm_s").get<double>();
    for (const auto& e : j.at("ticks")) {
        ScenarioTick t;
        t.phase = e.at("phase").get<int>();
        t.advancement_mm = e.at("advancement_mm").get<double>();
        if (e.contains("inject")) t.inject = e.at("inject").get<int>();
        s.ticks.push_back(t);
    }
    return s;
}

void save_simlog(const SimLog& log, const std::string& path) {
    json j;
    auto& ticks = j["ticks"] = json::array();
    for (const auto& t : log.ticks) {
        json e;
        e["tick"] = t.tick;
        e["phase"] = t.phase;
        auto& wire = e["wire"] = json::array();
        for (int i = 0; i < int(t.wire_nodes.cols()); ++i)
            wire.push_back(vec3_to_json(t.wire_nodes.col(i)));
        e["contacts"] = t.contact_count;
        e["particles"] = t.particle_count;
        e["outflow"] = t.outflow_count;
        ticks.push_back(std::move(e));
    }
    dump_json(j, path);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_hash_hex(const std::string& path) {
    const std::string bytes = read_text_file(path);
    const std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace artery
