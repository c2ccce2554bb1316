#include "commands.hpp"

#include "checks.hpp"
#include "image_io.hpp"

#include "tetforge/error.hpp"
#include "tetforge/meshing.hpp"
#include "tetforge/wire.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace tetforge::cli {

namespace fs = std::filesystem;

int guarded(std::ostream& err, const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const ProtocolError& e) {
        err << "protocol error: " << e.what() << '\n';
        return kExitPrior;
    } catch (const PriorError& e) {
        err << "prior error: " << e.what() << '\n';
        return kExitPrior;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

ScenePriors make_priors(const SceneSpec& spec) {
    ScenePriors p;
    if (spec.prior.mode == PriorMode::remote) {
        auto remote = std::make_unique<wire::RemotePrior>(wire::parse_endpoint(spec.prior.endpoint),
                                                          std::chrono::milliseconds(spec.prior.timeout_ms));
        p.set = {remote.get(), remote.get(), remote.get(), false};
        p.owner = std::move(remote);
        return p;
    }
    const int res = spec.prior.oracle_resolution > 0 ? spec.prior.oracle_resolution : spec.grid_resolution;
    const auto grid = std::make_shared<const TetGrid>(res);
    auto oracle = std::make_unique<OraclePrior>(make_schedule(),
                                                OracleCamera{spec.train.camera_radius, spec.train.fov_y_deg, 0, 0});
    for (const auto& [prompt, ref] : spec.prior.references) {
        OracleReference r;
        if (ref.primitive) {
            const Primitive shape = *ref.primitive;
            r.field = field_from_function<double>(grid, [&shape](const Vec3& x) { return primitive_sdf(shape, x); });
        } else {
            r.field = mesh_to_sdf(read_ply(spec.resolve(ref.mesh)), grid);
        }
        r.appearance = uniform_albedo(ref.albedo);
        oracle->add_reference(prompt, std::move(r));
    }
    p.set = {oracle.get(), oracle.get(), oracle.get(), true};
    p.owner = std::move(oracle);
    return p;
}

namespace {

template <typename Real>
int generate(const SceneSpec& spec, const fs::path& dir, std::ostream& out, std::ostream& err) {
    const ScenePriors priors = make_priors(spec);
    const ObservationSet obs = spec.observations();
    const NoiseSchedule schedule = make_schedule();

    const fs::path log_path = dir / "diagnostics.log";
    std::ofstream log(log_path);
    if (!log) throw IoError("cannot write " + log_path.string());
    log << "# prior " << priors.owner->identity() << '\n' << diagnostics_header() << '\n';

    std::deque<std::string> tail;
    StageHooks hooks;
    hooks.log = &log;
    hooks.on_step = [&tail](const StepDiagnostics& d) {
        tail.push_back(format_diagnostics(d));
        if (tail.size() > 10) tail.pop_front();
    };

    auto state = TrainState<Real>::sphere(spec.grid_resolution, spec.init_radius, spec.seed);
    try {
        run_geometry_stage(state, obs, schedule, priors.set, spec.train, spec.coarse, spec.refine, hooks);
        state.attach_appearance(spec.appearance_resolution);
        run_appearance_stage(state, obs, schedule, priors.set, spec.train, spec.appearance, hooks);
    } catch (const DivergenceError& e) {
        log.flush();
        err << "diverged: " << e.what() << "\nlast steps:\n" << diagnostics_header() << '\n';
        for (const auto& line : tail) err << line << '\n';
        return kExitDivergence;
    }
    log.flush();
    if (!log) throw IoError("cannot write " + log_path.string());

    const fs::path ckpt = dir / "checkpoint.tfck";
    save_checkpoint(state, ckpt.string());
    const fs::path scene_out = dir / "scene.yaml";
    std::ofstream ys(scene_out);
    ys << dump_scene(spec);
    if (!ys) throw IoError("cannot write " + scene_out.string());

    out << "iterations " << state.iteration << ", rejected " << state.rejected << '\n'
        << "wrote " << ckpt.string() << '\n'
        << "wrote " << log_path.string() << '\n'
        << "wrote " << scene_out.string() << '\n';
    return kExitOk;
}

std::string mesh_summary(const MeshStats& st) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu vertices, %zu triangles, watertight %s, euler %ld", st.vertices,
                  st.triangles, st.watertight ? "yes" : "no", st.euler);
    return buf;
}

} // namespace

int cmd_generate(const std::string& scene_path, const std::string& out_dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const SceneSpec spec = parse_scene(scene_path);
        for (const auto& w : spec.warnings) err << "warning: " << w << '\n';
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir);
        return spec.precision == "float" ? generate<float>(spec, out_dir, out, err)
                                         : generate<double>(spec, out_dir, out, err);
    });
}

int cmd_extract(const std::string& checkpoint, const std::string& mesh_path, bool also_obj, std::ostream& out,
                std::ostream& err) {
    return guarded(err, [&] {
        const auto state = load_checkpoint<double>(checkpoint);
        Mesh mesh = marching_tetrahedra(state.field);
        if (state.appearance) mesh = bake_vertex_colors(mesh, *state.appearance);
        if (mesh.triangles.empty()) err << "warning: extracted surface is empty\n";
        write_ply(mesh, mesh_path);
        out << "wrote " << mesh_path << " (" << mesh_summary(mesh_stats(mesh)) << ")\n";
        if (also_obj) {
            const fs::path obj = fs::path(mesh_path).replace_extension(".obj");
            write_obj(mesh, obj);
            out << "wrote " << obj.string() << '\n';
        }
        return kExitOk;
    });
}

int cmd_render(const std::string& checkpoint, const RenderRequest& req, const std::string& out_prefix,
               std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (req.size < 1 || req.size > 4096) throw ConfigError("render size must be in [1, 4096]");
        if (!(req.tau_cells > 0)) throw ConfigError("render temperature must be > 0");
        // Checkpoints hold float32 parameters, so a float render reproduces
        // the stored depth channel exactly.
        const auto state = load_checkpoint<float>(checkpoint);
        const TetGrid& grid = *state.field.grid;
        const Camera cam = camera_from_angles(req.azimuth_deg, req.elevation_deg, req.camera_radius, req.fov_y_deg,
                                              req.size, req.size);
        RenderConfig rc = default_render_config(grid, cam);
        rc.temperature = req.tau_cells * grid.cell_size();
        validate_render_config(rc, grid);
        const AppearanceField<float> fallback = make_appearance<float>(1);
        const AppearanceField<float>* app = state.appearance ? &*state.appearance : &fallback;
        const GBuffer<float> g = render<float>(state.field, app, cam, rc);

        const std::size_t n = g.pixels();
        Image8 rgb{g.width, g.height, 3, std::vector<std::uint8_t>(3 * n)};
        Image8 normal{g.width, g.height, 3, std::vector<std::uint8_t>(3 * n)};
        FloatImage depth{g.width, g.height, std::vector<float>(n)};
        for (std::size_t p = 0; p < n; ++p) {
            const bool background = g.normal[3 * p] == 0 && g.normal[3 * p + 1] == 0 && g.normal[3 * p + 2] == 0;
            for (int c = 0; c < 3; ++c) {
                rgb.data[3 * p + c] = to_byte(g.rgb[3 * p + c]);
                normal.data[3 * p + c] = background ? 0 : to_byte((double(g.normal[3 * p + c]) + 1) / 2);
            }
            depth.data[p] = g.depth[p];
        }
        const std::string files[3] = {out_prefix + "_rgb.png", out_prefix + "_normal.png", out_prefix + "_depth.pfm"};
        if (const fs::path parent = fs::path(out_prefix).parent_path(); !parent.empty() && !fs::is_directory(parent)) {
            throw IoError("output directory does not exist: " + parent.string());
        }
        write_png(rgb, files[0]);
        write_png(normal, files[1]);
        write_pfm(depth, files[2]);
        for (const auto& f : files) out << "wrote " << f << '\n';
        return kExitOk;
    });
}

int cmd_validate(std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto results = validation_suite();
        std::size_t width = 5;
        for (const auto& r : results) width = std::max(width, r.name.size());
        int failed = 0;
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-*s  %-4s  %8s  %s\n", int(width), "check", "ok", "seconds", "detail");
        out << buf;
        for (const auto& r : results) {
            std::snprintf(buf, sizeof buf, "%-*s  %-4s  %8.2f  ", int(width), r.name.c_str(), r.pass ? "PASS" : "FAIL",
                          r.seconds);
            out << buf << r.detail << '\n';
            failed += !r.pass;
        }
        out << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << '\n';
        return failed ? kExitFailure : kExitOk;
    });
}

int cmd_probe_prior(const std::string& endpoint_text, int timeout_ms, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const wire::Endpoint endpoint = wire::parse_endpoint(endpoint_text);
        if (timeout_ms < 1) throw ConfigError("timeout must be >= 1 ms");
        const auto t0 = std::chrono::steady_clock::now();
        std::unique_ptr<wire::RemotePrior> remote;
        try {
            remote = std::make_unique<wire::RemotePrior>(endpoint, std::chrono::milliseconds(timeout_ms));
        } catch (const ProtocolError& e) {
            err << "protocol error: " << e.what() << '\n';
            return int(kExitPrior);
        } catch (const PriorError& e) {
            err << "connection error: " << e.what() << '\n';
            return int(kExitPrior);
        }
        out << "connected to " << endpoint.str() << ", model '" << remote->identity() << "'\n";

        PriorRequest req;
        req.seq = 1;
        req.kind = MapKind::nd;
        req.t = 500;
        req.prompt = "probe";
        req.views = {ViewAngles{0, 0}};
        req.height = req.width = 16;
        req.tensors.resize(req.view_elements());
        for (std::size_t i = 0; i < req.tensors.size(); ++i) req.tensors[i] = std::sin(0.1 * double(i));

        PriorResponse resp;
        try {
            resp = remote->predict(req);
        } catch (const ProtocolError& e) {
            const std::string what = e.what();
            err << (what.find("shape") != std::string::npos ? "shape mismatch: " : "protocol error: ") << what << '\n';
            return int(kExitPrior);
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        bool echoed = resp.noise.size() == req.tensors.size();
        for (std::size_t i = 0; echoed && i < resp.noise.size(); ++i) echoed = resp.noise[i] == double(float(req.tensors[i]));
        out << "predict 1x16x16x4 ok, round trip " << std::lround(ms) << " ms\n"
            << (echoed ? "response bytes equal the request tensor bytes\n"
                       : "response differs from the request (not an echo model)\n");
        return int(kExitOk);
    });
}

} // namespace tetforge::cli
