#pragma once

// Subcommands of the `tetforge` executable. Each returns the process exit
// status and writes human-readable output to `out` and problems to `err`.

#include "scene.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>

namespace tetforge::cli {

enum ExitStatus : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitDivergence = 3,
    kExitPrior = 4,
    kExitIo = 5,
};

// Runs fn, mapping an escaping tetforge error to its exit status (message on err).
int guarded(std::ostream& err, const std::function<int()>& fn);

// Priors for a scene: one in-process oracle or one remote connection serving
// every map kind.
struct ScenePriors {
    std::unique_ptr<NoisePredictor> owner;
    PriorSet set;
};
ScenePriors make_priors(const SceneSpec& spec);

int cmd_generate(const std::string& scene_path, const std::string& out_dir, std::ostream& out, std::ostream& err);

int cmd_extract(const std::string& checkpoint, const std::string& mesh_path, bool also_obj, std::ostream& out,
                std::ostream& err);

struct RenderRequest {
    double azimuth_deg = 0;
    double elevation_deg = 0;
    int size = 256;
    double camera_radius = 2.5;
    double fov_y_deg = 40;
    double tau_cells = 1;
};
int cmd_render(const std::string& checkpoint, const RenderRequest& request, const std::string& out_prefix,
               std::ostream& out, std::ostream& err);

int cmd_validate(std::ostream& out, std::ostream& err);

int cmd_probe_prior(const std::string& endpoint, int timeout_ms, std::ostream& out, std::ostream& err);

} // namespace tetforge::cli
