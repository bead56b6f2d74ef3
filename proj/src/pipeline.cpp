#include "artery/pipeline.hpp"

#include "artery/io.hpp"
#include "artery/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace artery {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kStageOrder = {"phantom",  "vesselness", "centerline", "topology",
                                              "surface",  "tetmesh",    "weights",    "sequence",
                                              "validate", "simulate"};

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
    try {
        frangi.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("frangi: ") + e.what());
    }
    if (!(segment_threshold > 0)) throw InputError("segment_threshold must be positive");
    if (!(sections_per_mm > 0)) throw InputError("sections_per_mm must be positive");
    try {
        sizing.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("sizing: ") + e.what());
    }
    if (!(handle_subdivision_mm > 0)) throw InputError("handle_subdivision_mm must be positive");
    try {
        constraints.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("constraints: ") + e.what());
    }
    try {
        energy.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("energy: ") + e.what());
    }
    try {
        phantom.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("phantom: ") + e.what());
    }
    if (n_phases < 2) throw InputError("n_phases must be >= 2");
    if (subdivision < 1) throw InputError("subdivision must be >= 1");
    if (!(tree_voxel_mm > 0)) throw InputError("tree_voxel_mm must be positive");
    for (const auto& s : stages)
        if (std::find(kStageOrder.begin(), kStageOrder.end(), s) == kStageOrder.end())
            throw InputError("unknown stage \"" + s + "\"");
}

namespace {

json config_to_json(const PipelineConfig& c) {
    json j;
    j["frangi"] = {{"alpha", c.frangi.alpha},
                   {"beta", c.frangi.beta},
                   {"c", c.frangi.c},
                   {"c_auto", c.frangi.c_auto},
                   {"sigma_min_mm", c.frangi.sigma_min_mm},
                   {"sigma_max_mm", c.frangi.sigma_max_mm},
                   {"n_scales", c.frangi.n_scales}};
    j["segment_threshold"] = c.segment_threshold;
    j["sections_per_mm"] = c.sections_per_mm;
    j["sizing"] = {{"h_min_mm", c.sizing.h_min_mm},
                   {"h_max_mm", c.sizing.h_max_mm},
                   {"alpha_sizing", c.sizing.alpha_sizing}};
    j["handle_subdivision_mm"] = c.handle_subdivision_mm;
    j["solve"] = {{"kkt_tol", c.solve.kkt_tol},
                  {"max_active_set_iters", c.solve.max_active_set_iters}};
    j["constraints"] = {{"theta_max_deg", c.constraints.theta_max_deg},
                        {"r_min_mm", c.constraints.r_min_mm},
                        {"eps_max", c.constraints.eps_max},
                        {"youngs_modulus_mpa", c.constraints.youngs_modulus_mpa},
                        {"delta_max_mm", c.constraints.delta_max_mm},
                        {"eps_r_cap", c.constraints.eps_r_cap}};
    j["energy"] = {{"omega1", c.energy.omega1},
                   {"omega2", c.energy.omega2},
                   {"lambda_smooth", c.energy.lambda_smooth}};
    const char* kind = "straight_tube";
    switch (c.phantom.kind) {
        case PhantomKind::StraightTube: kind = "straight_tube"; break;
        case PhantomKind::BentTube: kind = "bent_tube"; break;
        case PhantomKind::YBranch: kind = "y_branch"; break;
        case PhantomKind::Helix: kind = "helix"; break;
        case PhantomKind::TorusArc: kind = "torus_arc"; break;
    }
    j["phantom"] = {{"kind", kind},
                    {"radius_mm", c.phantom.radius_mm},
                    {"length_mm", c.phantom.length_mm},
                    {"voxel_mm", c.phantom.voxel_mm},
                    {"profile_width_mm", c.phantom.profile_width_mm},
                    {"seed", c.phantom.seed}};
    const char* mode = "bend_cycle";
    switch (c.motion_mode) {
        case MotionMode::RigidTranslate: mode = "rigid_translate"; break;
        case MotionMode::BendCycle: mode = "bend_cycle"; break;
        case MotionMode::Breathe: mode = "breathe"; break;
    }
    j["motion_mode"] = mode;
    j["motion_amplitude"] = c.motion_amplitude;
    j["n_phases"] = c.n_phases;
    j["subdivision"] = c.subdivision;
    j["tree_voxel_mm"] = c.tree_voxel_mm;
    j["seed"] = c.seed;
    j["strict"] = c.strict;
    j["n_threads"] = c.n_threads;
    j["stages"] = c.stages;
    j["inputs"] = c.inputs;
    return j;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    if (j.contains("frangi")) {
        const auto& f = j.at("frangi");
        read_field(f, "alpha", c.frangi.alpha);
        read_field(f, "beta", c.frangi.beta);
        read_field(f, "c", c.frangi.c);
        read_field(f, "c_auto", c.frangi.c_auto);
        read_field(f, "sigma_min_mm", c.frangi.sigma_min_mm);
        read_field(f, "sigma_max_mm", c.frangi.sigma_max_mm);
        read_field(f, "n_scales", c.frangi.n_scales);
        if (f.contains("c") && f.at("c").get<double>() > 0) c.frangi.c_auto = false;
    }
    read_field(j, "segment_threshold", c.segment_threshold);
    read_field(j, "sections_per_mm", c.sections_per_mm);
    if (j.contains("sizing")) {
        const auto& s = j.at("sizing");
        read_field(s, "h_min_mm", c.sizing.h_min_mm);
        read_field(s, "h_max_mm", c.sizing.h_max_mm);
        read_field(s, "alpha_sizing", c.sizing.alpha_sizing);
    }
    read_field(j, "handle_subdivision_mm", c.handle_subdivision_mm);
    if (j.contains("solve")) {
        const auto& s = j.at("solve");
        read_field(s, "kkt_tol", c.solve.kkt_tol);
        read_field(s, "max_active_set_iters", c.solve.max_active_set_iters);
    }
    if (j.contains("constraints")) {
        const auto& m = j.at("constraints");
        read_field(m, "theta_max_deg", c.constraints.theta_max_deg);
        read_field(m, "r_min_mm", c.constraints.r_min_mm);
        read_field(m, "eps_max", c.constraints.eps_max);
        read_field(m, "youngs_modulus_mpa", c.constraints.youngs_modulus_mpa);
        read_field(m, "delta_max_mm", c.constraints.delta_max_mm);
        read_field(m, "eps_r_cap", c.constraints.eps_r_cap);
    }
    if (j.contains("energy")) {
        const auto& e = j.at("energy");
        read_field(e, "omega1", c.energy.omega1);
        read_field(e, "omega2", c.energy.omega2);
        read_field(e, "lambda_smooth", c.energy.lambda_smooth);
    }
    if (j.contains("phantom")) {
        const auto& p = j.at("phantom");
        if (p.contains("kind")) c.phantom.kind = phantom_kind_from_string(p.at("kind"));
        read_field(p, "radius_mm", c.phantom.radius_mm);
        read_field(p, "length_mm", c.phantom.length_mm);
        read_field(p, "voxel_mm", c.phantom.voxel_mm);
        read_field(p, "profile_width_mm", c.phantom.profile_width_mm);
        read_field(p, "seed", c.phantom.seed);
    }
    if (j.contains("motion_mode")) c.motion_mode = motion_mode_from_string(j.at("motion_mode"));
    read_field(j, "motion_amplitude", c.motion_amplitude);
    read_field(j, "n_phases", c.n_phases);
    read_field(j, "subdivision", c.subdivision);
    read_field(j, "tree_voxel_mm", c.tree_voxel_mm);
    read_field(j, "seed", c.seed);
    read_field(j, "strict", c.strict);
    read_field(j, "n_threads", c.n_threads);
    read_field(j, "stages", c.stages);
    read_field(j, "inputs", c.inputs);
    return c;
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
    return config_from_json_text(read_text_file(path));
}

PipelineConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("malformed config JSON: ") + e.what());
    }
    PipelineConfig c = config_from_json(j);
    c.validate();
    return c;
}

std::string config_to_json_text(const PipelineConfig& config) {
    return config_to_json(config).dump(2) + "\n";
}

void apply_override(std::string& json_text, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InputError("override must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json j = json::parse(json_text);
    json* cur = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw InputError("empty key in override path");
        if (dot == std::string::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (const json::parse_error&) {
                parsed = value;  // plain string
            }
            (*cur)[key] = parsed;
            break;
        }
        cur = &(*cur)[key];
        start = dot + 1;
    }
    json_text = j.dump(2);
}

void save_sections(const std::vector<std::vector<CrossSection>>& sections,
                   const std::string& path) {
    json j;
    auto& groups = j["branches"] = json::array();
    for (const auto& branch : sections) {
        json list = json::array();
        for (const auto& cs : branch) {
            json e;
            e["origin_mm"] = {cs.frame.origin_mm.x(), cs.frame.origin_mm.y(), cs.frame.origin_mm.z()};
            e["tangent"] = {cs.frame.tangent.x(), cs.frame.tangent.y(), cs.frame.tangent.z()};
            e["normal"] = {cs.frame.normal.x(), cs.frame.normal.y(), cs.frame.normal.z()};
            e["binormal"] = {cs.frame.binormal.x(), cs.frame.binormal.y(), cs.frame.binormal.z()};
            e["a_mm"] = cs.a_mm;
            e["b_mm"] = cs.b_mm;
            e["area0_mm2"] = cs.area0_mm2;
            e["arc_mm"] = cs.arc_mm;
            e["branch_id"] = cs.branch_id;
            e["section_index"] = cs.section_index;
            list.push_back(std::move(e));
        }
        groups.push_back(std::move(list));
    }
    write_text_file(path, j.dump(2) + "\n");
}

std::vector<std::vector<CrossSection>> load_sections(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(std::string("malformed sections JSON: ") + e.what());
    }
    std::vector<std::vector<CrossSection>> out;
    const auto vec3 = [](const json& a) { return Vec3(a.at(0), a.at(1), a.at(2)); };
    for (const auto& group : j.at("branches")) {
        std::vector<CrossSection> list;
        for (const auto& e : group) {
            CrossSection cs;
            cs.frame.origin_mm = vec3(e.at("origin_mm"));
            cs.frame.tangent = vec3(e.at("tangent"));
            cs.frame.normal = vec3(e.at("normal"));
            cs.frame.binormal = vec3(e.at("binormal"));
            cs.a_mm = e.at("a_mm").get<double>();
            cs.b_mm = e.at("b_mm").get<double>();
            cs.area0_mm2 = e.at("area0_mm2").get<double>();
            cs.arc_mm = e.at("arc_mm").get<double>();
            cs.branch_id = e.at("branch_id").get<int>();
            cs.section_index = e.at("section_index").get<int>();
            const int nc = 64;
            cs.contour.reserve(nc);
            for (int k = 0; k < nc; ++k) {
                const double th = 2.0 * M_PI * k / nc;
                cs.contour.emplace_back(cs.a_mm * std::cos(th), cs.b_mm * std::sin(th));
            }
            list.push_back(std::move(cs));
        }
        out.push_back(std::move(list));
    }
    return out;
}

std::vector<CrossSection> flatten_sections(
    const std::vector<std::vector<CrossSection>>& sections) {
    std::vector<CrossSection> flat;
    for (const auto& group : sections)
        for (const auto& cs : group) flat.push_back(cs);
    std::sort(flat.begin(), flat.end(),
              [](const CrossSection& a, const CrossSection& b) {
                  return a.section_index < b.section_index;
              });
    return flat;
}

namespace {

struct StageContext {
    const PipelineConfig& config;
    fs::path out;
    std::map<std::string, std::string> paths;   // artifact name -> path
    std::map<std::string, std::string> hashes;

    void record(const std::string& name, const std::string& path) {
        paths[name] = path;
        hashes[name] = file_hash_hex(path);
    }
    std::string need(const std::string& stage, const std::string& artifact) const {
        auto it = paths.find(artifact);
        if (it == paths.end()) {
            auto in = config.inputs.find(artifact);
            if (in != config.inputs.end()) return in->second;
            throw InputError("stage " + stage + " is missing input artifact \"" + artifact + "\"");
        }
        return it->second;
    }
    bool wanted(const std::string& stage) const {
        if (config.stages.empty()) return true;
        return std::find(config.stages.begin(), config.stages.end(), stage) !=
               config.stages.end();
    }
};

Scenario default_scenario(const PipelineConfig& config, int n_frames) {
    Scenario s;
    s.seed = config.seed;
    for (int k = 0; k < 50; ++k) {
        ScenarioTick tick;
        tick.phase = k % n_frames;
        tick.advancement_mm = 0.5;
        if (k == 0) tick.inject = 200;
        s.ticks.push_back(tick);
    }
    return s;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const std::string& out_dir) {
    config.validate();
    StageContext ctx{config, fs::path(out_dir), {}, {}};
    fs::create_directories(ctx.out);

    if (ctx.wanted("phantom")) {
        const Phantom phantom = make_phantom(config.phantom);
        save_volume(phantom.volume, (ctx.out / "phantom.vol.json").string());
        save_tree(phantom.tree, (ctx.out / "phantom.tree.json").string());
        save_surface(phantom.surface, (ctx.out / "phantom.obj").string());
        ctx.record("volume", (ctx.out / "phantom.vol.json").string());
        ctx.record("phantom_tree", (ctx.out / "phantom.tree.json").string());
        ctx.record("phantom_surface", (ctx.out / "phantom.obj").string());
    }

    if (ctx.wanted("vesselness")) {
        const VoxelVolume volume = load_volume(ctx.need("vesselness", "volume"));
        const VoxelVolume vesselness = compute_vesselness(volume, config.frangi, config.n_threads);
        save_volume(vesselness, (ctx.out / "vesselness.vol.json").string());
        ctx.record("vesselness", (ctx.out / "vesselness.vol.json").string());
    }

    if (ctx.wanted("centerline")) {
        const VoxelVolume vesselness = load_volume(ctx.need("centerline", "vesselness"));
        const VoxelVolume mask = segment_vesselness(vesselness, config.segment_threshold);
        save_volume(mask, (ctx.out / "mask.vol.json").string());
        ctx.record("mask", (ctx.out / "mask.vol.json").string());

        const VesselTree tree = extract_centerline_auto(mask);
        save_tree(tree, (ctx.out / "centerline.tree.json").string());
        ctx.record("tree", (ctx.out / "centerline.tree.json").string());
    }

    if (ctx.wanted("topology")) {
        const VesselTree tree = load_tree(ctx.need("topology", "tree"));
        save_tree(analyze_topology(tree), (ctx.out / "topology.tree.json").string());
        ctx.record("tree", (ctx.out / "topology.tree.json").string());
    }

    if (ctx.wanted("surface")) {
        const VesselTree tree = load_tree(ctx.need("surface", "tree"));
        const auto sections = build_cross_sections(tree, config.sections_per_mm);
        const SurfaceMesh surface = loft_tree_surface(sections, tree, config.sizing);
        save_surface(surface, (ctx.out / "surface.obj").string());
        save_sections(sections, (ctx.out / "sections.json").string());
        ctx.record("surface", (ctx.out / "surface.obj").string());
        ctx.record("sections", (ctx.out / "sections.json").string());
    }

    if (ctx.wanted("tetmesh")) {
        const SurfaceMesh surface = load_surface(ctx.need("tetmesh", "surface"));
        const VesselTree tree = load_tree(ctx.need("tetmesh", "tree"));
        const TetMesh mesh = tetrahedralize(surface, tree);
        save_tetmesh(mesh, (ctx.out / "mesh.tet.json").string());
        ctx.record("tetmesh", (ctx.out / "mesh.tet.json").string());
    }

    if (ctx.wanted("weights")) {
        const TetMesh mesh = load_tetmesh(ctx.need("weights", "tetmesh"));
        const HandleSet handles = build_handles(mesh, config.handle_subdivision_mm);
        SolveOptions opts = config.solve;
        opts.n_threads = config.n_threads;
        const WeightMatrix weights =
            normalize_weights(solve_weights(mesh, handles, opts), &mesh, &handles);
        save_weights(weights, (ctx.out / "skin.wts.json").string());
        ctx.record("weights", (ctx.out / "skin.wts.json").string());
    }

    if (ctx.wanted("sequence")) {
        const SurfaceMesh surface = load_surface(ctx.need("sequence", "surface"));
        const TetMesh mesh = load_tetmesh(ctx.need("sequence", "tetmesh"));
        const WeightMatrix weights = load_weights(ctx.need("sequence", "weights"));
        const auto sections = load_sections(ctx.need("sequence", "sections"));
        const HandleSet handles = build_handles(mesh, config.handle_subdivision_mm);

        const std::vector<CrossSection> flat = flatten_sections(sections);
        const std::vector<KeyPose> poses = make_motion_keyposes(
            handles, mesh, flat, config.motion_mode, config.n_phases, config.motion_amplitude);
        const Eigen::MatrixXd vw = wall_weights(weights, mesh, surface);
        SequenceOptions opts;
        opts.subdivision = config.subdivision;
        opts.strict = config.strict;
        opts.constraints = config.constraints;
        opts.energy = config.energy;
        const MotionSequence seq =
            generate_sequence(poses, surface, flat, vw, handles, mesh, opts);
        save_sequence(seq, ctx.out.string(), "cycle");
        save_report(check_constraints(seq, config.constraints), sequence_energy(seq, config.energy),
                    (ctx.out / "cycle.report.json").string());
        ctx.record("sequence", (ctx.out / "cycle.seq.json").string());
        ctx.record("report", (ctx.out / "cycle.report.json").string());
    }

    if (ctx.wanted("validate")) {
        const std::string interp_path = ctx.need("validate", "sequence");
        const std::string ref_path =
            config.inputs.count("reference") ? config.inputs.at("reference") : interp_path;
        const std::vector<SurfaceMesh> interp = load_sequence_meshes(interp_path);
        const std::vector<SurfaceMesh> ref = load_sequence_meshes(ref_path);
        if (interp.size() != ref.size())
            throw InputError("validate: sequence phase counts differ");
        std::vector<int> phases(interp.size());
        for (int i = 0; i < int(phases.size()); ++i) phases[size_t(i)] = i;
        const ValidationSummary summary =
            validate_sequence(interp, ref, phases, config.tree_voxel_mm, config.n_threads);
        write_text_file((ctx.out / "metrics.csv").string(), metrics_csv(summary));
        ctx.record("metrics", (ctx.out / "metrics.csv").string());
    }

    if (ctx.wanted("simulate")) {
        const SurfaceMesh surface = load_surface(ctx.need("simulate", "surface"));
        const TetMesh mesh = load_tetmesh(ctx.need("simulate", "tetmesh"));
        const WeightMatrix weights = load_weights(ctx.need("simulate", "weights"));
        const auto sections = load_sections(ctx.need("simulate", "sections"));
        const VesselTree tree = load_tree(ctx.need("simulate", "tree"));
        const HandleSet handles = build_handles(mesh, config.handle_subdivision_mm);
        const std::vector<CrossSection> flat = flatten_sections(sections);
        const std::vector<KeyPose> poses = make_motion_keyposes(
            handles, mesh, flat, config.motion_mode, config.n_phases, config.motion_amplitude);
        SequenceOptions sopts;
        sopts.subdivision = config.subdivision;
        sopts.constraints = config.constraints;
        sopts.energy = config.energy;
        const MotionSequence seq = generate_sequence(poses, surface, flat,
                                                     wall_weights(weights, mesh, surface), handles,
                                                     mesh, sopts);

        Scenario scenario;
        if (config.inputs.count("scenario")) scenario = load_scenario(config.inputs.at("scenario"));
        else scenario = default_scenario(config, int(seq.frames.size()));
        save_scenario(scenario, (ctx.out / "run.scenario.json").string());
        ctx.record("scenario", (ctx.out / "run.scenario.json").string());

        // wire seeded along the root branch axis at the tube entry
        Guidewire wire;
        const Branch& root = tree.branches.front();
        const Vec3 head = tree.point(root.point_ids.front()).pos_mm;
        Vec3 dir = tree.point(root.point_ids.back()).pos_mm - head;
        dir = dir.norm() > 1e-12 ? Vec3(dir.normalized()) : Vec3::UnitZ();
        const int n_nodes = 10;
        wire.segment_length_mm = 1.0;
        wire.tip_radius_mm = 0.3;
        wire.nodes.resize(3, n_nodes);
        for (int i = 0; i < n_nodes; ++i)
            wire.nodes.col(i) = head + dir * (double(i - n_nodes + 1) * wire.segment_length_mm);

        const SimLog log = run_scenario(scenario, seq, surface, tree, wire);
        save_simlog(log, (ctx.out / "run.simlog.json").string());
        ctx.record("simlog", (ctx.out / "run.simlog.json").string());
    }

    // manifest with config and artifact fingerprints
    json manifest;
    const std::string config_text = config_to_json_text(config);
    manifest["config_hash"] = [&] {
        char buf[24];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(config_text.data(), config_text.size())));
        return std::string(buf);
    }();
    json arts;
    for (const auto& [name, path] : ctx.paths)
        arts[name] = {{"path", fs::path(path).filename().string()}, {"hash", ctx.hashes.at(name)}};
    manifest["artifacts"] = arts;
    write_text_file((ctx.out / "manifest.json").string(), manifest.dump(2) + "\n");

    PipelineResult result;
    result.artifact_paths = ctx.paths;
    result.artifact_hashes = ctx.hashes;
    result.manifest_path = (ctx.out / "manifest.json").string();
    return result;
}

}  // namespace artery
