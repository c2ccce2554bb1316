#include "commands.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace tetforge::cli;

int main(int argc, char** argv) {
    CLI::App app{"tetforge: multi-semantic text-to-3D distillation on a tetrahedral SDF"};
    app.require_subcommand(1);

    std::string scene, out_dir;
    auto* generate = app.add_subcommand("generate", "Run the geometry and appearance stages for a scene");
    generate->add_option("scene", scene, "Scene file (YAML)")->required();
    generate->add_option("--out", out_dir, "Output directory")->required();

    std::string ckpt, mesh_path;
    bool obj = false;
    auto* extract = app.add_subcommand("extract", "Extract a mesh from a checkpoint");
    extract->add_option("checkpoint", ckpt, "Checkpoint file")->required();
    extract->add_option("--out", mesh_path, "Output PLY path")->required();
    extract->add_flag("--obj", obj, "Also write an OBJ next to the PLY");

    RenderRequest req;
    std::string prefix;
    auto* render = app.add_subcommand("render", "Render RGB, normal and depth images of a checkpoint");
    render->add_option("checkpoint", ckpt, "Checkpoint file")->required();
    render->add_option("--azimuth", req.azimuth_deg, "Camera azimuth, degrees")->required();
    render->add_option("--elevation", req.elevation_deg, "Camera elevation, degrees")->required();
    render->add_option("--out", prefix, "Output prefix (PREFIX_rgb.png, PREFIX_normal.png, PREFIX_depth.pfm)")
        ->required();
    render->add_option("--size", req.size, "Image width and height")->capture_default_str();
    render->add_option("--radius", req.camera_radius, "Camera distance")->capture_default_str();
    render->add_option("--fov", req.fov_y_deg, "Vertical field of view, degrees")->capture_default_str();
    render->add_option("--tau-cells", req.tau_cells, "Render temperature in grid cells")->capture_default_str();

    auto* validate = app.add_subcommand("validate", "Run the embedded invariant suite");

    std::string endpoint;
    int timeout_ms = 5000;
    auto* probe = app.add_subcommand("probe-prior", "Handshake and echo round trip with a prior service");
    probe->add_option("endpoint", endpoint, "host:port")->required();
    probe->add_option("--timeout-ms", timeout_ms, "Socket timeout")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    if (*generate) return cmd_generate(scene, out_dir, std::cout, std::cerr);
    if (*extract) return cmd_extract(ckpt, mesh_path, obj, std::cout, std::cerr);
    if (*render) return cmd_render(ckpt, req, prefix, std::cout, std::cerr);
    if (*validate) return cmd_validate(std::cout, std::cerr);
    if (*probe) return cmd_probe_prior(endpoint, timeout_ms, std::cout, std::cerr);
    return kExitFailure;
}
