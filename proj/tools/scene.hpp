#pragma once

// Scene description read by the command line tool: observation semantics,
// grid and stage settings, and the prior to distill from. The on-disk form
// is a strict YAML subset; see scenes/reference.yaml.

#include "tetforge/distill.hpp"
#include "tetforge/shapes.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tetforge::cli {

struct SemanticSpec {
    std::string prompt;
    double azimuth_deg = 0;
    double elevation_deg = 0;
};

struct ReferenceSpec {
    std::optional<Primitive> primitive;
    std::string mesh; // PLY path as written in the scene (relative to the scene file)
    Vec3 albedo{0.5, 0.5, 0.5};
};

enum class PriorMode { oracle, remote };

struct PriorSpec {
    PriorMode mode = PriorMode::oracle;
    std::string endpoint = "127.0.0.1:5555";
    int timeout_ms = 30000;
    int oracle_resolution = 0; // 0: same as the scene grid
    std::map<std::string, ReferenceSpec> references;
};

inline constexpr double kCloseViewWarningDeg = 60.0;
inline constexpr std::size_t kMaxSemantics = 4;

struct SceneSpec {
    std::vector<SemanticSpec> semantics;
    int grid_resolution = 64;
    int appearance_resolution = 64;
    double init_radius = 0.5;
    double s0 = 70;
    std::string precision = "double"; // float | double
    std::uint64_t seed = 0;
    TrainConfig train;
    StageConfig coarse = default_stage(StageKind::coarse);
    StageConfig refine = default_stage(StageKind::refine);
    StageConfig appearance = default_stage(StageKind::appearance);
    PriorSpec prior;

    std::string base_dir; // directory relative paths resolve against
    std::vector<std::string> warnings;

    ObservationSet observations() const;
    std::string resolve(const std::string& path) const;
};

// Throws ConfigError with a line number for syntax errors and a field path
// for constraint violations. IoError when the file cannot be read.
SceneSpec parse_scene(const std::string& path);
SceneSpec parse_scene_text(const std::string& text, const std::string& base_dir = ".");

// Every field with defaults filled, in a fixed key order.
std::string dump_scene(const SceneSpec& spec);

} // namespace tetforge::cli
