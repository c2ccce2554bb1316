#include "checks.hpp"

#include "tetforge/guidance.hpp"
#include "tetforge/meshing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace tetforge::cli {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

template <typename Fn>
CheckResult timed(std::string name, Fn&& fn) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.name = std::move(name);
    fn(r);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

std::shared_ptr<const TetGrid> grid_of(int r) { return std::make_shared<const TetGrid>(r); }

SdfField<double> primitive_field(std::shared_ptr<const TetGrid> grid, const Primitive& p) {
    return field_from_function<double>(grid, [&p](const Vec3& x) { return primitive_sdf(p, x); });
}

double contract(const GBuffer<double>& a, const GBuffer<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.normal.size(); ++i) s += a.normal[i] * b.normal[i];
    for (std::size_t i = 0; i < a.depth.size(); ++i) s += a.depth[i] * b.depth[i];
    for (std::size_t i = 0; i < a.alpha.size(); ++i) s += a.alpha[i] * b.alpha[i];
    for (std::size_t i = 0; i < a.rgb.size(); ++i) s += a.rgb[i] * b.rgb[i];
    return s;
}

} // namespace

AppearanceField<double> uniform_albedo(const Vec3& albedo) {
    auto a = make_appearance<double>(1);
    for (std::size_t v = 0; v < a.lattice_vertices(); ++v) {
        for (int c = 0; c < 3; ++c) {
            const double k = std::clamp(albedo[c], 1e-4, 1 - 1e-4);
            a.features[v * kMaterialChannels + kAlbedoR + c] = std::log(k / (1 - k));
        }
    }
    return a;
}

CheckResult check_guidance_scale() {
    return timed("guidance scale", [](CheckResult& r) {
        ObservationSet obs;
        obs.add("a", 0, 0);
        obs.add("b", 90, 0);
        const double s0 = obs.s0;
        const double at30 = guidance_scale(influence_weights(view_direction(30, 0), obs), s0) / s0;
        const double at45 = guidance_scale(influence_weights(view_direction(45, 0), obs), s0);
        const double at0 = guidance_scale(influence_weights(view_direction(0, 0), obs), s0);
        r.pass = std::abs(at30 - 0.57735) <= 1e-4 && std::abs(at45) <= 1e-9 && std::abs(at0 - s0) <= 1e-3 * s0;
        r.detail = fmt("s/s0(30)=%.6f s(45)=%.2e s(0)/s0=%.6f", at30, at45, at0 / s0);
    });
}

CheckResult check_renderer_gradients(int vertices) {
    return timed("renderer gradients", [vertices](CheckResult& r) {
        const auto grid = grid_of(8);
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> bump(-0.05, 0.05);
        auto field = init_sphere<double>(grid, 0.5);
        for (auto& v : field.values) v = perturb_zero(v + bump(rng));
        const auto cam = camera_from_angles(35, 20, 2.5, 40, 16, 16);
        const auto cfg = default_render_config(*grid, cam);

        // Random linear functional of the whole GBuffer.
        const auto g = render<double>(field, nullptr, cam, cfg);
        std::normal_distribution<double> gn(0.0, 1.0);
        auto cot = GBuffer<double>::zeros(g.width, g.height, false);
        for (auto* ch : {&cot.normal, &cot.depth, &cot.alpha})
            for (auto& x : *ch) x = gn(rng);
        const auto grads = render_backward<double>(field, nullptr, cam, cfg, cot);

        std::vector<Index> live;
        for (Index v = 0; v < grads.field.size(); ++v)
            if (grads.field[v] != 0.0) live.push_back(v);
        if (live.size() < std::size_t(vertices)) {
            r.detail = fmt("only %zu vertices influence the image", live.size());
            return;
        }
        std::shuffle(live.begin(), live.end(), rng);
        const double h = 1e-5;
        double worst = 0;
        for (int k = 0; k < vertices; ++k) {
            const Index v = live[k];
            auto fp = field, fm = field;
            fp.values[v] += h;
            fm.values[v] -= h;
            const double fd = (contract(render<double>(fp, nullptr, cam, cfg), cot) -
                               contract(render<double>(fm, nullptr, cam, cfg), cot)) /
                              (2 * h);
            worst = std::max(worst, std::abs(grads.field[v] - fd) / std::max(std::abs(fd), 1e-8));
        }
        r.pass = worst <= 1e-3;
        r.detail = fmt("%d vertices, max rel err %.2e", vertices, worst);
    });
}

CheckResult check_sphere_oracle() {
    return timed("sphere render oracle", [](CheckResult& r) {
        const auto grid = grid_of(64);
        const auto field = init_sphere<double>(grid, 0.5);
        const auto cam = camera_from_angles(0, 0, 2.5, 40, 64, 64);
        const auto cfg = default_render_config(*grid, cam);
        const auto g = render<double>(field, nullptr, cam, cfg);
        const std::size_t c = std::size_t(32) * 64 + 32;
        const double depth = raw_depth(g.depth[c], g.alpha[c], cfg);

        double sum = 0;
        std::size_t n = 0;
        for (int py = 0; py < g.height; ++py) {
            for (int px = 0; px < g.width; ++px) {
                const std::size_t p = std::size_t(py) * g.width + px;
                if (g.alpha[p] <= 0.5) continue;
                const Vec3 d = cam.ray_direction(px, py);
                const Vec3 o = cam.position;
                const double b = dot(o, d);
                const double disc = b * b - (dot(o, o) - 0.25);
                if (disc < 0) {
                    sum += 180;
                    ++n;
                    continue;
                }
                const Vec3 hit = o + d * (-b - std::sqrt(disc));
                const Vec3 w = hit / 0.5;
                const Vec3 expect{dot(w, cam.right), dot(w, cam.up), -dot(w, cam.forward)};
                const Vec3 got{g.normal[3 * p], g.normal[3 * p + 1], g.normal[3 * p + 2]};
                const double len = norm(got);
                const double cosv = len > 0 ? std::clamp(dot(got, expect) / len, -1.0, 1.0) : -1.0;
                sum += std::acos(cosv) * 180 / std::numbers::pi;
                ++n;
            }
        }
        const double mean = n ? sum / double(n) : 180;
        r.pass = std::abs(depth - 2.0) <= 2 * cfg.step_size && mean <= 5.0 && n > 0;
        r.detail = fmt("centre depth %.5f (tol %.4f), mean normal err %.3f deg over %zu px", depth,
                       2 * cfg.step_size, mean, n);
    });
}

CheckResult check_case_matrix() {
    return timed("marching-tet case matrix", [](CheckResult& r) {
        const std::array<Vec3, 4> tet{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
        const auto& table = case_table();
        int bad = 0;
        std::string first;
        for (int c = 0; c < 16; ++c) {
            std::array<double, 4> f;
            for (int q = 0; q < 4; ++q) f[q] = (c & (1 << q)) ? -0.5 - 0.1 * q : 0.5 + 0.1 * q;
            const int got = int(polygonize_tet(tet, f).triangles.size());
            if (got != kCaseTriangleCounts[c] || table[c].count != kCaseTriangleCounts[c]) {
                if (bad++ == 0) first = fmt("case %d gives %d triangles, expected %d", c, got, kCaseTriangleCounts[c]);
            }
        }
        r.pass = bad == 0;
        r.detail = bad ? fmt("%d cases wrong; ", bad) + first : "16/16 cases";
    });
}

CheckResult check_sphere_extraction() {
    return timed("sphere extraction", [](CheckResult& r) {
        const auto grid = grid_of(64);
        const auto field = init_sphere<double>(grid, 0.6);
        const auto mesh = marching_tetrahedra(field);
        const auto st = mesh_stats(mesh);
        double worst = 0;
        for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(norm(v) - 0.6));
        const double bound = 2 * std::sqrt(3.0) / 64;
        r.pass = st.watertight && st.euler == 2 && worst <= bound;
        r.detail = fmt("watertight %d, euler %ld, max deviation %.2e (bound %.2e)", int(st.watertight), st.euler,
                       worst, bound);
    });
}

CheckResult check_regularizer_oracles() {
    return timed("regularizer oracles", [](CheckResult& r) {
        const int R = 4;
        const auto grid = grid_of(R);
        const Vec3 n = normalized(Vec3{1.0, -2.0, 0.5});
        const auto plane = field_from_function<double>(grid, [&](const Vec3& p) { return dot(p, n) + 0.31; });
        const auto scaled = field_from_function<double>(grid, [&](const Vec3& p) { return 2 * dot(p, n) + 0.31; });
        const double eik = eikonal_loss(plane);
        const double nc = normal_consistency_loss(plane);
        const double eik2 = eikonal_loss(scaled);
        const double expect = 6.0 * R * R * R;
        r.pass = eik <= 1e-20 && nc <= 1e-12 && std::abs(eik2 - expect) <= 1e-9 * expect;
        r.detail = fmt("plane eik %.2e nc %.2e, scaled eik %.12g (6R^3 = %g)", eik, nc, eik2, expect);
    });
}

CheckResult check_cfg_linearity() {
    return timed("cfg linearity", [](CheckResult& r) {
        const auto grid = grid_of(8);
        const auto schedule = make_schedule();
        OraclePrior oracle(schedule, OracleCamera{});
        Primitive ball;
        ball.radius = 0.7;
        oracle.add_reference("ball", {primitive_field(grid, ball), {}});
        ObservationSet obs;
        obs.add("ball", 20, 10);
        const auto state = TrainState<double>::sphere(8, 0.5, 11);
        const PriorSet priors{&oracle, nullptr, nullptr, true};
        TrainConfig train;
        train.image_size = 16;
        StageConfig stage = default_stage(StageKind::coarse);
        stage.iterations = 1;
        stage.lambda_sds = stage.lambda_eik = stage.lambda_nc = 0;

        auto norm_at = [&](double s) {
            auto copy = state; // same rng stream for both scales
            StepOptions opt;
            opt.scale = s;
            opt.apply_update = false;
            const auto res = lgad_step(copy, obs, schedule, priors, train, stage, opt);
            double sq = 0;
            for (double g : res.lgad_field_grad) sq += g * g;
            return std::sqrt(sq);
        };
        const double n20 = norm_at(20), n40 = norm_at(40);
        const double ratio = n40 / n20;
        r.pass = n20 > 0 && std::abs(ratio - 2.0) <= 1e-6 * 2.0;
        r.detail = fmt("|g(40)|/|g(20)| = %.12f", ratio);
    });
}

CheckResult check_ddpm_statistics() {
    return timed("ddpm statistics", [](CheckResult& r) {
        const std::size_t n = 10000;
        const double g0 = 0.8, ab = 0.25;
        std::mt19937_64 rng(1234);
        const auto eps = standard_normal(rng, n);
        std::vector<double> out(n);
        add_noise_ab(std::vector<double>(n, g0), ab, eps, out);
        double mean = 0;
        for (double x : out) mean += x;
        mean /= double(n);
        double var = 0;
        for (double x : out) var += (x - mean) * (x - mean);
        var /= double(n - 1);
        const double want_var = 1 - ab;
        const double se_mean = std::sqrt(want_var / double(n));
        const double se_var = want_var * std::sqrt(2.0 / double(n - 1));
        const double zm = (mean - std::sqrt(ab) * g0) / se_mean;
        const double zv = (var - want_var) / se_var;
        r.pass = std::abs(zm) <= 3 && std::abs(zv) <= 3;
        r.detail = fmt("mean %.5f (z %.2f), var %.5f (z %.2f)", mean, zm, var, zv);
    });
}

std::vector<CheckResult> validation_suite() {
    return {check_guidance_scale(),  check_renderer_gradients(), check_sphere_oracle(),
            check_case_matrix(),     check_sphere_extraction(),  check_regularizer_oracles(),
            check_cfg_linearity(),   check_ddpm_statistics()};
}

ClosedLoopResult run_closed_loop(const ClosedLoopScene& scene) {
    const auto t0 = Clock::now();
    const auto grid = grid_of(scene.resolution);
    const auto schedule = make_schedule();
    const Primitive* shapes[2] = {&scene.box, &scene.cylinder};
    OraclePrior oracle(schedule, OracleCamera{});
    oracle.add_reference("box", {primitive_field(grid, scene.box), {}});
    oracle.add_reference("cylinder", {primitive_field(grid, scene.cylinder), {}});
    ObservationSet obs;
    obs.add("box", 0, 0);
    obs.add("cylinder", 90, 0);

    // LGAD plus the SDF regularizers; no auxiliary 2D term in oracle runs.
    StageConfig coarse = default_stage(StageKind::coarse);
    coarse.iterations = scene.coarse_iterations;
    coarse.lambda_sds = 0;
    coarse.tau_cells = scene.coarse_tau_cells;
    StageConfig refine = default_stage(StageKind::refine);
    refine.iterations = scene.refine_iterations;
    refine.lambda_sds = 0;
    refine.learning_rate = coarse.learning_rate / 2;

    auto state = TrainState<double>::sphere(scene.resolution, 0.5, scene.seed);
    const PriorSet priors{&oracle, nullptr, nullptr, true};
    run_geometry_stage(state, obs, schedule, priors, TrainConfig{}, coarse, refine);

    ClosedLoopResult out;
    const TrainConfig train;
    for (int i = 0; i < 2; ++i) {
        const auto& e = obs.entries[std::size_t(i)];
        const auto cam = camera_from_angles(e.azimuth_deg, e.elevation_deg, train.camera_radius, train.fov_y_deg,
                                            train.image_size, train.image_size);
        RenderConfig rc = default_render_config(*grid, cam);
        rc.temperature = grid->cell_size();
        const auto got = render<double>(state.field, nullptr, cam, rc);
        const auto ref = render<double>(primitive_field(grid, *shapes[i]), nullptr, cam, rc);
        out.views[i] = compare_views(got, ref);
    }
    out.checksum = parameter_checksum(state.field.values);
    out.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return out;
}

AppearanceLoopResult run_appearance_loop(int iterations, double learning_rate) {
    const auto t0 = Clock::now();
    const int R = 32;
    const auto grid = grid_of(R);
    const auto schedule = make_schedule();
    Primitive ball;
    ball.radius = 0.5;
    OraclePrior oracle(schedule, OracleCamera{});
    oracle.add_reference("red", {primitive_field(grid, ball), uniform_albedo({1, 0, 0})});
    ObservationSet obs;
    obs.add("red", 0, 0);

    auto state = TrainState<double>::sphere(R, 0.5, 5);
    state.attach_appearance(16);
    const auto before = state.field.values;
    StageConfig stage = default_stage(StageKind::appearance);
    stage.iterations = iterations;
    stage.learning_rate = learning_rate;
    const PriorSet priors{&oracle, &oracle, nullptr, true};
    const TrainConfig train;
    run_appearance_stage(state, obs, schedule, priors, train, stage);

    AppearanceLoopResult out;
    out.sdf_unchanged = state.field.values == before;
    // k_d where the observation view's rays meet the surface.
    const auto& e = obs.entries.front();
    const Camera cam = camera_from_angles(e.azimuth_deg, e.elevation_deg, train.camera_radius, train.fov_y_deg,
                                          train.image_size, train.image_size);
    RenderConfig rc = default_render_config(*grid, cam);
    rc.temperature = grid->cell_size();
    const auto g = render<double>(state.field, &*state.appearance, cam, rc);
    double sum = 0;
    std::size_t n = 0;
    for (int py = 0; py < g.height; ++py) {
        for (int px = 0; px < g.width; ++px) {
            const std::size_t p = std::size_t(py) * g.width + px;
            if (g.alpha[p] <= 0.5) continue;
            Vec3 x = cam.position + cam.ray_direction(px, py) * raw_depth(g.depth[p], g.alpha[p], rc);
            for (int a = 0; a < 3; ++a) x[a] = std::clamp(x[a], -1.0, 1.0);
            const auto m = material_at(*state.appearance, x);
            sum += norm(Vec3{m.kd.x - 1, m.kd.y, m.kd.z});
            ++n;
        }
    }
    out.kd_error = n ? sum / double(n) : 1.0;
    out.pixels = n;
    out.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return out;
}

} // namespace tetforge::cli
