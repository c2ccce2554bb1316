#include "doctest.h"

#include "tetforge/error.hpp"
#include "tetforge/renderer.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace tetforge;

namespace {

std::shared_ptr<const TetGrid> grid_of(int r) { return std::make_shared<const TetGrid>(r); }

// Nearest positive ray parameter hitting the sphere, or -1.
double ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
    const Vec3 oc = o - c;
    const double b = dot(oc, d);
    const double disc = b * b - (dot(oc, oc) - r * r);
    if (disc < 0) return -1;
    return -b - std::sqrt(disc);
}

Vec3 pixel_normal(const GBuffer<double>& g, int px, int py) {
    const std::size_t p = std::size_t(py) * g.width + px;
    return {g.normal[3 * p], g.normal[3 * p + 1], g.normal[3 * p + 2]};
}

SdfField<double> bumpy_sphere(std::shared_ptr<const TetGrid> grid, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    auto f = init_sphere<double>(grid, 0.5);
    for (auto& v : f.values) v = perturb_zero(v + u(rng));
    return f;
}

GBuffer<double> random_cotangent(const GBuffer<double>& shape, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    auto c = GBuffer<double>::zeros(shape.width, shape.height, shape.has_rgb());
    for (auto& x : c.normal) x = g(rng);
    for (auto& x : c.depth) x = g(rng);
    for (auto& x : c.alpha) x = g(rng);
    for (auto& x : c.rgb) x = g(rng);
    return c;
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

TEST_CASE("camera conventions") {
    auto c = camera_from_angles(0, 0, 2.5, 40, 64, 64);
    CHECK(c.position.x == doctest::Approx(2.5));
    CHECK(std::abs(c.position.y) < 1e-12);
    CHECK(std::abs(c.position.z) < 1e-12);
    CHECK(c.up.z == doctest::Approx(1.0));
    // Right-handed: right x up points back toward the camera.
    const Vec3 back = cross(c.right, c.up);
    CHECK(dot(back, c.direction()) == doctest::Approx(1.0));

    c = camera_from_angles(90, 0, 2.5, 40, 64, 64);
    CHECK(std::abs(c.position.x) < 1e-12);
    CHECK(c.position.y == doctest::Approx(2.5));

    c = camera_from_angles(0, 89, 2.5, 40, 64, 64);
    CHECK(c.position.z > 2.49);
    CHECK(norm(c.position) == doctest::Approx(2.5));
    CHECK(dot(c.up, c.forward) == doctest::Approx(0.0));

    CHECK_THROWS_AS(camera_from_angles(0, 0, 1.7, 40, 64, 64), ConfigError);
    CHECK_THROWS_AS(camera_from_angles(0, 90, 2.5, 40, 64, 64), ConfigError);
    CHECK_THROWS_AS(camera_from_angles(0, 0, 2.5, 40, 0, 64), ConfigError);
    CHECK_THROWS_AS(camera_from_angles(0, 0, 2.5, 40, 64, 4097), ConfigError);
}

TEST_CASE("render config validation") {
    const auto grid = grid_of(8);
    const auto cam = camera_from_angles(0, 0, 2.5, 40, 4, 4);
    auto cfg = default_render_config(*grid, cam);
    CHECK(cfg.step_size == doctest::Approx(0.125));
    CHECK(cfg.temperature == doctest::Approx(0.5));
    CHECK(cfg.near == doctest::Approx(1.5));
    CHECK(cfg.far == doctest::Approx(3.5));
    const auto field = init_sphere<double>(grid, 0.5);
    auto bad = cfg;
    bad.step_size = 0.3;
    CHECK_THROWS_AS(render(field, nullptr, cam, bad), ConfigError);
    bad = cfg;
    bad.temperature = 0;
    CHECK_THROWS_AS(render(field, nullptr, cam, bad), ConfigError);
    bad = cfg;
    bad.near = 4;
    CHECK_THROWS_AS(render(field, nullptr, cam, bad), ConfigError);
}

TEST_CASE("sphere render matches the analytic intersection") {
    const auto grid = grid_of(64);
    const auto field = init_sphere<double>(grid, 0.5);
    const auto cam = camera_from_angles(0, 0, 2.5, 40, 64, 64);
    const auto cfg = default_render_config(*grid, cam);
    const auto g = render(field, nullptr, cam, cfg);

    const int px = 32, py = 32;
    const std::size_t p = std::size_t(py) * 64 + px;
    const double t_hit = ray_sphere(cam.position, cam.ray_direction(px, py), Vec3{}, 0.5);
    REQUIRE(t_hit > 0);
    CHECK(g.alpha[p] >= 0.99);
    const double d = raw_depth(g.depth[p], g.alpha[p], cfg);
    CHECK(std::abs(d - t_hit) <= 2 * cfg.step_size);
    CHECK(std::abs(d - 2.0) <= 2 * cfg.step_size);

    const Vec3 n = pixel_normal(g, px, py);
    const double angle = std::acos(std::clamp(n.z / norm(n), -1.0, 1.0)) * 180.0 / std::numbers::pi;
    CHECK(angle <= 5.0);

    // Corner ray misses the sphere.
    CHECK(ray_sphere(cam.position, cam.ray_direction(0, 0), Vec3{}, 0.5) < 0);
    CHECK(g.alpha[0] <= 1e-3);
    CHECK(pixel_normal(g, 0, 0) == Vec3{0, 0, 0});
    CHECK(g.depth[0] == 0.0);

    // ND packing of the centre pixel.
    const auto nd = nd_pack(g);
    CHECK(std::abs(nd.data[4 * p + 0]) < 0.1);
    CHECK(std::abs(nd.data[4 * p + 1]) < 0.1);
    CHECK(nd.data[4 * p + 2] > 0.99);
    const double expected = g.alpha[p] * (cfg.far - t_hit) / (cfg.far - cfg.near);
    CHECK(std::abs(nd.data[4 * p + 3] - expected) <= 2 * cfg.step_size / (cfg.far - cfg.near));
    for (int c = 0; c < 4; ++c) CHECK(nd.data[c] == 0.0);
}

TEST_CASE("every pixel stays within channel ranges") {
    const auto grid = grid_of(16);
    const auto field = bumpy_sphere(grid, 4);
    auto app = make_appearance<double>(4);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gn(0.0, 2.0);
    for (auto& x : app.features) x = gn(rng);
    for (double az : {0.0, 77.0, 200.0}) {
        const auto cam = camera_from_angles(az, 20, 2.5, 40, 24, 20);
        const auto cfg = default_render_config(*grid, cam);
        const auto g = render(field, &app, cam, cfg);
        for (std::size_t p = 0; p < g.pixels(); ++p) {
            CHECK(g.alpha[p] >= 0.0);
            CHECK(g.alpha[p] <= 1.0 + 1e-6);
            CHECK(g.depth[p] >= 0.0);
            CHECK(g.depth[p] <= 1.0 + 1e-9);
            for (int c = 0; c < 3; ++c) {
                CHECK(std::abs(g.normal[3 * p + c]) <= 1.0 + 1e-12);
                CHECK(g.rgb[3 * p + c] >= -1e-12);
                CHECK(g.rgb[3 * p + c] <= 1.0 + 1e-9);
            }
            const Vec3 n = pixel_normal(g, int(p % g.width), int(p / g.width));
            if (g.alpha[p] < kBackgroundAlpha) {
                CHECK(n == Vec3{0, 0, 0});
                CHECK(g.depth[p] == 0.0);
            } else {
                CHECK(norm(n) == doctest::Approx(1.0).epsilon(1e-9));
                CHECK(n.z >= -1e-12); // faces the camera (roughly, up to ray obliquity)
            }
        }
    }
}

TEST_CASE("empty field renders nothing") {
    const auto grid = grid_of(8);
    SdfField<double> f{grid, std::vector<double>(grid->vertex_count(), 1.0)};
    const auto cam = camera_from_angles(30, 10, 2.5, 40, 16, 16);
    auto app = make_appearance<double>(2);
    const auto g = render(f, &app, cam, default_render_config(*grid, cam));
    for (std::size_t p = 0; p < g.pixels(); ++p) {
        CHECK(g.alpha[p] == 0.0);
        CHECK(g.depth[p] == 0.0);
        CHECK(g.rgb[3 * p] == 1.0);
    }
}

TEST_CASE("opaque red surface composites to red") {
    const auto grid = grid_of(32);
    const auto field = init_sphere<double>(grid, 0.5);
    auto app = make_appearance<double>(4);
    for (std::size_t v = 0; v < app.lattice_vertices(); ++v) {
        app.features[8 * v + kAlbedoR] = 30;
        app.features[8 * v + kAlbedoG] = -30;
        app.features[8 * v + kAlbedoB] = -30;
    }
    const auto cam = camera_from_angles(0, 0, 2.5, 40, 32, 32);
    const auto g = render(field, &app, cam, default_render_config(*grid, cam));
    const std::size_t p = 16 * 32 + 16;
    CHECK(g.alpha[p] > 0.9);
    CHECK(g.rgb[3 * p] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(g.rgb[3 * p + 1] == doctest::Approx(1.0 - g.alpha[p]).epsilon(1e-6));
}

TEST_CASE("translation of scene and camera leaves the render unchanged") {
    const auto grid = grid_of(64);
    const double h = grid->cell_size();
    const Vec3 shift{3 * h, -2 * h, 5 * h};
    auto sphere_at = [&](const Vec3& c) {
        return field_from_function<double>(grid, [c](const Vec3& p) { return norm(p - c) - 0.4; });
    };
    const auto f0 = sphere_at(Vec3{});
    const auto f1 = sphere_at(shift);
    const auto c0 = camera_from_angles(25, 15, 2.5, 30, 32, 32);
    const auto c1 = camera_from_angles(25, 15, 2.5, 30, 32, 32, shift);
    auto cfg = default_render_config(*grid, c0);
    cfg.temperature = 0.02;
    const auto g0 = render(f0, nullptr, c0, cfg);
    const auto g1 = render(f1, nullptr, c1, cfg);
    double worst = 0;
    for (std::size_t i = 0; i < g0.depth.size(); ++i) {
        worst = std::max(worst, std::abs(g0.depth[i] - g1.depth[i]));
        worst = std::max(worst, std::abs(g0.alpha[i] - g1.alpha[i]));
    }
    for (std::size_t i = 0; i < g0.normal.size(); ++i) worst = std::max(worst, std::abs(g0.normal[i] - g1.normal[i]));
    CHECK(worst <= 1e-6);
}

TEST_CASE("halving the step converges the centre depth") {
    const auto grid = grid_of(64);
    const auto field = init_sphere<double>(grid, 0.5);
    const auto cam = camera_from_angles(0, 0, 2.5, 40, 33, 33);
    auto cfg = default_render_config(*grid, cam);
    const std::size_t p = 16 * 33 + 16;
    const auto a = render(field, nullptr, cam, cfg);
    auto half = cfg;
    half.step_size *= 0.5;
    const auto b = render(field, nullptr, cam, half);
    const double da = raw_depth(a.depth[p], a.alpha[p], cfg);
    const double db = raw_depth(b.depth[p], b.alpha[p], half);
    CHECK(std::abs(da - db) < cfg.step_size);
}

TEST_CASE("jitter is deterministic per seed") {
    const auto grid = grid_of(16);
    const auto field = init_sphere<double>(grid, 0.5);
    const auto cam = camera_from_angles(10, 5, 2.5, 40, 16, 16);
    auto cfg = default_render_config(*grid, cam);
    cfg.jitter = true;
    cfg.seed = 42;
    const auto a = render(field, nullptr, cam, cfg);
    const auto b = render(field, nullptr, cam, cfg);
    CHECK(a.depth == b.depth);
    CHECK(a.normal == b.normal);
    cfg.seed = 43;
    const auto c = render(field, nullptr, cam, cfg);
    CHECK(a.depth != c.depth);
}

TEST_CASE("backward matches finite differences") {
    const auto grid = grid_of(8);
    auto field = bumpy_sphere(grid, 1);
    auto app = make_appearance<double>(3);
    std::mt19937_64 rng(21);
    std::normal_distribution<double> gn(0.0, 1.0);
    for (auto& x : app.features) x = 0.5 * gn(rng);
    const auto cam = camera_from_angles(35, 20, 2.5, 40, 16, 16);
    const auto cfg = default_render_config(*grid, cam);

    for (const AppearanceField<double>* a : {static_cast<const AppearanceField<double>*>(nullptr),
                                             static_cast<const AppearanceField<double>*>(&app)}) {
        const auto g = render(field, a, cam, cfg);
        const auto cot = random_cotangent(g, rng);
        const auto grads = render_backward(field, a, cam, cfg, cot);
        const double h = 1e-5;
        // Single-vertex perturbations over vertices the image actually depends on.
        std::vector<Index> live;
        for (Index v = 0; v < grads.field.size(); ++v)
            if (grads.field[v] != 0.0) live.push_back(v);
        REQUIRE(live.size() > 50);
        std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
        int failures = 0;
        for (int trial = 0; trial < 50; ++trial) {
            const Index v = live[pick(rng)];
            auto fp = field, fm = field;
            fp.values[v] += h;
            fm.values[v] -= h;
            const double fd =
                (contract(render(fp, a, cam, cfg), cot) - contract(render(fm, a, cam, cfg), cot)) / (2 * h);
            const double rel = std::abs(grads.field[v] - fd) / std::max(std::abs(fd), 1e-8);
            if (rel > 1e-3) {
                ++failures;
                MESSAGE("vertex " << v << " analytic " << grads.field[v] << " fd " << fd);
            }
        }
        CHECK(failures == 0);

        if (a) {
            for (int trial = 0; trial < 20; ++trial) {
                std::vector<double> dir(app.features.size());
                for (auto& x : dir) x = gn(rng);
                double analytic = 0;
                for (std::size_t i = 0; i < dir.size(); ++i) analytic += grads.appearance[i] * dir[i];
                auto ap = app, am = app;
                for (std::size_t i = 0; i < dir.size(); ++i) {
                    ap.features[i] += h * dir[i];
                    am.features[i] -= h * dir[i];
                }
                const double fd =
                    (contract(render(field, &ap, cam, cfg), cot) - contract(render(field, &am, cam, cfg), cot)) /
                    (2 * h);
                CHECK(std::abs(analytic - fd) <= 1e-3 * std::max(std::abs(fd), 1e-8));
            }
        }
    }
}

TEST_CASE("backward is linear in the cotangent") {
    const auto grid = grid_of(8);
    const auto field = bumpy_sphere(grid, 2);
    auto app = make_appearance<double>(2);
    const auto cam = camera_from_angles(-40, 10, 2.5, 40, 12, 12);
    const auto cfg = default_render_config(*grid, cam);
    const auto g = render(field, &app, cam, cfg);

    const auto zero = GBuffer<double>::zeros(12, 12, true);
    const auto gz = render_backward(field, &app, cam, cfg, zero);
    for (double x : gz.field) CHECK(x == 0.0);
    for (double x : gz.appearance) CHECK(x == 0.0);

    std::mt19937_64 rng(6);
    auto cot = random_cotangent(g, rng);
    const auto g1 = render_backward(field, &app, cam, cfg, cot);
    auto cot2 = cot;
    for (auto* v : {&cot2.normal, &cot2.depth, &cot2.alpha, &cot2.rgb})
        for (auto& x : *v) x *= 2;
    const auto g2 = render_backward(field, &app, cam, cfg, cot2);
    for (std::size_t i = 0; i < g1.field.size(); ++i) CHECK(g2.field[i] == 2 * g1.field[i]);
    for (std::size_t i = 0; i < g1.appearance.size(); ++i) CHECK(g2.appearance[i] == 2 * g1.appearance[i]);
}

TEST_CASE("backward rejects a mismatched cotangent") {
    const auto grid = grid_of(8);
    const auto field = init_sphere<double>(grid, 0.5);
    const auto cam = camera_from_angles(0, 0, 2.5, 40, 8, 8);
    const auto cfg = default_render_config(*grid, cam);
    CHECK_THROWS_AS(render_backward(field, nullptr, cam, cfg, GBuffer<double>::zeros(8, 7, false)), ContractError);
    CHECK_THROWS_AS(render_backward(field, nullptr, cam, cfg, GBuffer<double>::zeros(8, 8, true)), ContractError);
}

TEST_CASE("backward is independent of thread count") {
    const auto grid = grid_of(8);
    const auto field = bumpy_sphere(grid, 3);
    const auto cam = camera_from_angles(60, -15, 2.5, 40, 16, 16);
    const auto cfg = default_render_config(*grid, cam);
    std::mt19937_64 rng(1);
    const auto cot = random_cotangent(render(field, nullptr, cam, cfg), rng);
    setenv("TF_THREADS", "1", 1);
    const auto a = render_backward(field, nullptr, cam, cfg, cot);
    setenv("TF_THREADS", "4", 1);
    const auto b = render_backward(field, nullptr, cam, cfg, cot);
    unsetenv("TF_THREADS");
    CHECK(a.field == b.field);
}

TEST_CASE("nd pack round trip") {
    const auto grid = grid_of(16);
    const auto field = bumpy_sphere(grid, 5);
    const auto cam = camera_from_angles(15, 30, 2.5, 40, 10, 9);
    const auto g = render(field, nullptr, cam, default_render_config(*grid, cam));
    const auto nd = nd_pack(g);
    CHECK(nd.channels == 4);
    CHECK(nd.data.size() == 4 * g.pixels());
    GBuffer<double> back;
    nd_unpack(nd, back);
    CHECK(back.normal == g.normal);
    CHECK(back.depth == g.depth);
    const auto nrm = normal_pack(g);
    CHECK(nrm.channels == 3);
    CHECK(nrm.data == g.normal);
    CHECK_THROWS_AS(rgbd_pack(g), ContractError);
}
