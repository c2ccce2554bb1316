#include "scene.hpp"

#include "tetforge/error.hpp"
#include "tetforge/wire.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace tetforge::cli {

namespace fs = std::filesystem;

ObservationSet SceneSpec::observations() const {
    ObservationSet obs;
    obs.s0 = s0;
    for (const auto& s : semantics) obs.add(s.prompt, s.azimuth_deg, s.elevation_deg);
    return obs;
}

std::string SceneSpec::resolve(const std::string& path) const {
    const fs::path p(path);
    return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string();
}

namespace {

std::string at(const YAML::Node& n) {
    const auto m = n.Mark();
    return m.is_null() ? std::string() : " (line " + std::to_string(m.line + 1) + ")";
}

[[noreturn]] void fail(const std::string& path, const std::string& what, const YAML::Node& n) {
    throw ConfigError(path + ": " + what + at(n));
}

void expect_map(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> keys) {
    if (!n.IsMap()) fail(path, "expected a mapping", n);
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key", kv.first);
    }
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

template <typename T>
void read(const YAML::Node& parent, const std::string& path, const char* key, T& out) {
    const YAML::Node n = parent[key];
    if (!n) return;
    if (!n.IsScalar()) fail(join(path, key), "expected a scalar", n);
    try {
        out = n.as<T>();
    } catch (const YAML::Exception&) {
        fail(join(path, key), "cannot parse '" + n.Scalar() + "'", n);
    }
}

Vec3 read_vec3(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence() || n.size() != 3) fail(path, "expected a list of 3 numbers", n);
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        try {
            v[i] = n[i].as<double>();
        } catch (const YAML::Exception&) {
            fail(path, "cannot parse '" + n[i].Scalar() + "'", n[i]);
        }
    }
    return v;
}

void read_stage(const YAML::Node& n, const std::string& path, StageConfig& s) {
    expect_map(n, path,
               {"iterations", "t_lo", "t_hi", "learning_rate", "lambda_lgad", "lambda_sds", "lambda_eik",
                "lambda_nc", "tau_cells"});
    read(n, path, "iterations", s.iterations);
    read(n, path, "t_lo", s.t_lo);
    read(n, path, "t_hi", s.t_hi);
    read(n, path, "learning_rate", s.learning_rate);
    read(n, path, "lambda_lgad", s.lambda_lgad);
    read(n, path, "lambda_sds", s.lambda_sds);
    read(n, path, "lambda_eik", s.lambda_eik);
    read(n, path, "lambda_nc", s.lambda_nc);
    read(n, path, "tau_cells", s.tau_cells);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        fail(path, e.what(), n);
    }
}

ReferenceSpec read_reference(const YAML::Node& n, const std::string& path) {
    expect_map(n, path, {"primitive", "center", "radius", "half_extents", "half_height", "mesh", "albedo"});
    ReferenceSpec r;
    if (n["primitive"] && n["mesh"]) fail(path, "give either primitive or mesh, not both", n);
    if (n["primitive"]) {
        Primitive p;
        std::string kind;
        read(n, path, "primitive", kind);
        try {
            p.kind = parse_primitive_kind(kind);
        } catch (const ConfigError& e) {
            fail(join(path, "primitive"), e.what(), n["primitive"]);
        }
        if (n["center"]) p.center = read_vec3(n["center"], join(path, "center"));
        if (n["half_extents"]) p.half_extents = read_vec3(n["half_extents"], join(path, "half_extents"));
        read(n, path, "radius", p.radius);
        read(n, path, "half_height", p.half_height);
        try {
            p.validate();
        } catch (const ConfigError& e) {
            fail(path, e.what(), n);
        }
        r.primitive = p;
    } else if (n["mesh"]) {
        read(n, path, "mesh", r.mesh);
        if (r.mesh.empty()) fail(join(path, "mesh"), "empty path", n["mesh"]);
    } else {
        fail(path, "needs a primitive or a mesh", n);
    }
    if (n["albedo"]) r.albedo = read_vec3(n["albedo"], join(path, "albedo"));
    for (int i = 0; i < 3; ++i) {
        if (!(r.albedo[i] >= 0.0 && r.albedo[i] <= 1.0)) fail(join(path, "albedo"), "values must be in [0, 1]", n);
    }
    return r;
}

SceneSpec from_yaml(const YAML::Node& root, const std::string& base_dir) {
    SceneSpec s;
    s.base_dir = base_dir;
    if (!root || root.IsNull()) throw ConfigError("scene is empty");
    expect_map(root, "",
               {"semantics", "grid_resolution", "appearance_resolution", "init_radius", "s0", "precision", "seed",
                "render", "stages", "prior"});

    const YAML::Node sem = root["semantics"];
    if (!sem) throw ConfigError("semantics: required");
    if (!sem.IsSequence()) fail("semantics", "expected a list", sem);
    for (std::size_t i = 0; i < sem.size(); ++i) {
        const std::string path = "semantics[" + std::to_string(i) + "]";
        expect_map(sem[i], path, {"prompt", "azimuth_deg", "elevation_deg"});
        SemanticSpec e;
        read(sem[i], path, "prompt", e.prompt);
        read(sem[i], path, "azimuth_deg", e.azimuth_deg);
        read(sem[i], path, "elevation_deg", e.elevation_deg);
        if (e.prompt.empty()) fail(join(path, "prompt"), "required and non-empty", sem[i]);
        if (!(std::abs(e.elevation_deg) <= 89.0)) fail(join(path, "elevation_deg"), "must be within [-89, 89]", sem[i]);
        if (!std::isfinite(e.azimuth_deg)) fail(join(path, "azimuth_deg"), "must be finite", sem[i]);
        for (const auto& prev : s.semantics)
            if (prev.prompt == e.prompt) fail(join(path, "prompt"), "duplicate prompt '" + e.prompt + "'", sem[i]);
        s.semantics.push_back(e);
    }
    if (s.semantics.empty()) fail("semantics", "at least one semantic is required", sem);
    if (s.semantics.size() > kMaxSemantics) {
        fail("semantics", "at most " + std::to_string(kMaxSemantics) + " semantics are supported", sem);
    }

    read(root, "", "grid_resolution", s.grid_resolution);
    read(root, "", "appearance_resolution", s.appearance_resolution);
    read(root, "", "init_radius", s.init_radius);
    read(root, "", "s0", s.s0);
    read(root, "", "precision", s.precision);
    read(root, "", "seed", s.seed);
    if (s.grid_resolution < 1 || s.grid_resolution > TetGrid::kMaxResolution) {
        fail("grid_resolution", "must be in [1, " + std::to_string(TetGrid::kMaxResolution) + "]",
             root["grid_resolution"]);
    }
    if (s.appearance_resolution < 1 || s.appearance_resolution > 512) {
        fail("appearance_resolution", "must be in [1, 512]", root["appearance_resolution"]);
    }
    if (!(s.init_radius > 0.0 && s.init_radius < 1.0)) fail("init_radius", "must be in (0, 1)", root["init_radius"]);
    if (!(s.s0 > 0.0) || !std::isfinite(s.s0)) fail("s0", "must be > 0", root["s0"]);
    if (s.precision != "float" && s.precision != "double") fail("precision", "must be float or double", root["precision"]);

    if (const YAML::Node r = root["render"]) {
        expect_map(r, "render",
                   {"image_size", "camera_radius", "fov_y_deg", "step_cells", "jitter", "surround_offsets"});
        read(r, "render", "image_size", s.train.image_size);
        read(r, "render", "camera_radius", s.train.camera_radius);
        read(r, "render", "fov_y_deg", s.train.fov_y_deg);
        read(r, "render", "step_cells", s.train.step_cells);
        read(r, "render", "jitter", s.train.jitter);
        if (const YAML::Node off = r["surround_offsets"]) {
            if (!off.IsSequence()) fail("render.surround_offsets", "expected a list", off);
            s.train.surround_offsets.clear();
            for (const auto& o : off) {
                try {
                    s.train.surround_offsets.push_back(o.as<double>());
                } catch (const YAML::Exception&) {
                    fail("render.surround_offsets", "cannot parse '" + o.Scalar() + "'", o);
                }
            }
        }
        try {
            s.train.validate();
            camera_from_angles(0, 0, s.train.camera_radius, s.train.fov_y_deg, s.train.image_size,
                               s.train.image_size);
        } catch (const ConfigError& e) {
            fail("render", e.what(), r);
        }
    }

    if (const YAML::Node st = root["stages"]) {
        expect_map(st, "stages", {"coarse", "refine", "appearance"});
        if (st["coarse"]) read_stage(st["coarse"], "stages.coarse", s.coarse);
        if (st["refine"]) read_stage(st["refine"], "stages.refine", s.refine);
        if (st["appearance"]) read_stage(st["appearance"], "stages.appearance", s.appearance);
    }

    if (const YAML::Node p = root["prior"]) {
        expect_map(p, "prior", {"mode", "endpoint", "timeout_ms", "oracle_resolution", "oracle_references"});
        std::string mode = "oracle";
        read(p, "prior", "mode", mode);
        if (mode == "oracle") {
            s.prior.mode = PriorMode::oracle;
        } else if (mode == "remote") {
            s.prior.mode = PriorMode::remote;
        } else {
            fail("prior.mode", "must be oracle or remote", p["mode"]);
        }
        read(p, "prior", "endpoint", s.prior.endpoint);
        read(p, "prior", "timeout_ms", s.prior.timeout_ms);
        read(p, "prior", "oracle_resolution", s.prior.oracle_resolution);
        try {
            wire::parse_endpoint(s.prior.endpoint);
        } catch (const ConfigError& e) {
            fail("prior.endpoint", e.what(), p["endpoint"]);
        }
        if (s.prior.timeout_ms < 1) fail("prior.timeout_ms", "must be >= 1", p["timeout_ms"]);
        if (s.prior.oracle_resolution < 0 || s.prior.oracle_resolution > TetGrid::kMaxResolution) {
            fail("prior.oracle_resolution", "out of range", p["oracle_resolution"]);
        }
        if (const YAML::Node refs = p["oracle_references"]) {
            if (!refs.IsMap()) fail("prior.oracle_references", "expected a mapping", refs);
            for (const auto& kv : refs) {
                const auto prompt = kv.first.as<std::string>();
                s.prior.references[prompt] = read_reference(kv.second, "prior.oracle_references." + prompt);
            }
        }
    }

    if (s.prior.mode == PriorMode::oracle) {
        for (const auto& sem_entry : s.semantics) {
            if (!s.prior.references.count(sem_entry.prompt)) {
                throw ConfigError("prior.oracle_references: no reference for prompt '" + sem_entry.prompt + "'");
            }
        }
    }
    for (const auto& [prompt, ref] : s.prior.references) {
        if (!ref.mesh.empty() && !fs::exists(s.resolve(ref.mesh))) {
            throw ConfigError("prior.oracle_references." + prompt + ".mesh: file not found: " + s.resolve(ref.mesh));
        }
    }

    const double angle = s.observations().min_pairwise_angle_deg();
    if (s.semantics.size() > 1 && angle < kCloseViewWarningDeg) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "observation views are only %.1f degrees apart (below %.0f); semantics may blend", angle,
                      kCloseViewWarningDeg);
        s.warnings.push_back(buf);
    }
    return s;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

void emit_vec3(YAML::Emitter& out, const Vec3& v) {
    out << YAML::Flow << YAML::BeginSeq << num(v.x) << num(v.y) << num(v.z) << YAML::EndSeq;
}

void emit_stage(YAML::Emitter& out, const StageConfig& s) {
    out << YAML::BeginMap;
    out << YAML::Key << "iterations" << YAML::Value << s.iterations;
    out << YAML::Key << "t_lo" << YAML::Value << num(s.t_lo);
    out << YAML::Key << "t_hi" << YAML::Value << num(s.t_hi);
    out << YAML::Key << "learning_rate" << YAML::Value << num(s.learning_rate);
    out << YAML::Key << "lambda_lgad" << YAML::Value << num(s.lambda_lgad);
    out << YAML::Key << "lambda_sds" << YAML::Value << num(s.lambda_sds);
    out << YAML::Key << "lambda_eik" << YAML::Value << num(s.lambda_eik);
    out << YAML::Key << "lambda_nc" << YAML::Value << num(s.lambda_nc);
    out << YAML::Key << "tau_cells" << YAML::Value << num(s.tau_cells);
    out << YAML::EndMap;
}

} // namespace

SceneSpec parse_scene_text(const std::string& text, const std::string& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("scene syntax error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    try {
        return from_yaml(root, base_dir);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("scene error: ") + e.what());
    }
}

SceneSpec parse_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read scene file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    const fs::path dir = fs::path(path).parent_path();
    return parse_scene_text(text.str(), dir.empty() ? "." : dir.string());
}

std::string dump_scene(const SceneSpec& s) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "semantics" << YAML::Value << YAML::BeginSeq;
    for (const auto& e : s.semantics) {
        out << YAML::BeginMap;
        out << YAML::Key << "prompt" << YAML::Value << YAML::DoubleQuoted << e.prompt;
        out << YAML::Key << "azimuth_deg" << YAML::Value << num(e.azimuth_deg);
        out << YAML::Key << "elevation_deg" << YAML::Value << num(e.elevation_deg);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "grid_resolution" << YAML::Value << s.grid_resolution;
    out << YAML::Key << "appearance_resolution" << YAML::Value << s.appearance_resolution;
    out << YAML::Key << "init_radius" << YAML::Value << num(s.init_radius);
    out << YAML::Key << "s0" << YAML::Value << num(s.s0);
    out << YAML::Key << "precision" << YAML::Value << s.precision;
    out << YAML::Key << "seed" << YAML::Value << s.seed;

    out << YAML::Key << "render" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "image_size" << YAML::Value << s.train.image_size;
    out << YAML::Key << "camera_radius" << YAML::Value << num(s.train.camera_radius);
    out << YAML::Key << "fov_y_deg" << YAML::Value << num(s.train.fov_y_deg);
    out << YAML::Key << "step_cells" << YAML::Value << num(s.train.step_cells);
    out << YAML::Key << "jitter" << YAML::Value << s.train.jitter;
    out << YAML::Key << "surround_offsets" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double o : s.train.surround_offsets) out << num(o);
    out << YAML::EndSeq;
    out << YAML::EndMap;

    out << YAML::Key << "stages" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "coarse" << YAML::Value;
    emit_stage(out, s.coarse);
    out << YAML::Key << "refine" << YAML::Value;
    emit_stage(out, s.refine);
    out << YAML::Key << "appearance" << YAML::Value;
    emit_stage(out, s.appearance);
    out << YAML::EndMap;

    out << YAML::Key << "prior" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "mode" << YAML::Value << (s.prior.mode == PriorMode::oracle ? "oracle" : "remote");
    out << YAML::Key << "endpoint" << YAML::Value << s.prior.endpoint;
    out << YAML::Key << "timeout_ms" << YAML::Value << s.prior.timeout_ms;
    out << YAML::Key << "oracle_resolution" << YAML::Value << s.prior.oracle_resolution;
    out << YAML::Key << "oracle_references" << YAML::Value << YAML::BeginMap;
    for (const auto& [prompt, r] : s.prior.references) {
        out << YAML::Key << YAML::DoubleQuoted << prompt << YAML::Value << YAML::BeginMap;
        if (r.primitive) {
            const Primitive& p = *r.primitive;
            out << YAML::Key << "primitive" << YAML::Value << primitive_name(p.kind);
            out << YAML::Key << "center" << YAML::Value;
            emit_vec3(out, p.center);
            switch (p.kind) {
            case PrimitiveKind::sphere: out << YAML::Key << "radius" << YAML::Value << num(p.radius); break;
            case PrimitiveKind::box:
                out << YAML::Key << "half_extents" << YAML::Value;
                emit_vec3(out, p.half_extents);
                break;
            case PrimitiveKind::cylinder:
                out << YAML::Key << "radius" << YAML::Value << num(p.radius);
                out << YAML::Key << "half_height" << YAML::Value << num(p.half_height);
                break;
            }
        } else {
            out << YAML::Key << "mesh" << YAML::Value << YAML::DoubleQuoted << r.mesh;
        }
        out << YAML::Key << "albedo" << YAML::Value;
        emit_vec3(out, r.albedo);
        out << YAML::EndMap;
    }
    out << YAML::EndMap;
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

} // namespace tetforge::cli
