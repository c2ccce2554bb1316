#include "doctest.h"

#include "checks.hpp"
#include "commands.hpp"
#include "echo_server.hpp"
#include "image_io.hpp"
#include "scene.hpp"

#include "tetforge/error.hpp"
#include "tetforge/meshing.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tetforge;
using namespace tetforge::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("tetforge_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct FaultGuard {
    explicit FaultGuard(const char* mode) { ::setenv("TF_FAULT", mode, 1); }
    ~FaultGuard() { ::unsetenv("TF_FAULT"); }
};

const char* kTwoSemantics = R"(semantics:
  - {prompt: chair, azimuth_deg: 0}
  - {prompt: table, azimuth_deg: 120}
prior:
  oracle_references:
    chair: {primitive: box, half_extents: [0.4, 0.5, 0.3]}
    table: {primitive: cylinder, radius: 0.45, half_height: 0.4}
)";

// A small scene that runs in well under a second per stage.
std::string tiny_scene(int coarse, int refine, int appearance, const std::string& extra = "") {
    std::ostringstream s;
    s << "semantics:\n  - {prompt: ball, azimuth_deg: 10, elevation_deg: 5}\n"
      << "  - {prompt: block, azimuth_deg: 100}\n"
      << "grid_resolution: 8\nappearance_resolution: 4\nseed: 3\n"
      << "render: {image_size: 16}\n"
      << "stages:\n  coarse: {iterations: " << coarse << "}\n  refine: {iterations: " << refine
      << "}\n  appearance: {iterations: " << appearance << "}\n"
      << extra;
    if (extra.find("prior:") == std::string::npos) {
        s << "prior:\n  oracle_references:\n    ball: {primitive: sphere, radius: 0.6, albedo: [1, 0, 0]}\n"
          << "    block: {primitive: box, half_extents: [0.4, 0.4, 0.4]}\n";
    }
    return s.str();
}

void require_config_error(const std::string& text, const std::string& fragment) {
    try {
        parse_scene_text(text);
        FAIL("expected a ConfigError containing: " << fragment);
    } catch (const ConfigError& e) {
        CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
}

TrainState<double> empty_state() {
    auto s = TrainState<double>::sphere(8, 0.5, 1);
    for (auto& v : s.field.values) v = 1.0;
    return s;
}

} // namespace

TEST_CASE("minimal scene takes the documented defaults") {
    const auto s = parse_scene_text(kTwoSemantics);
    REQUIRE(s.semantics.size() == 2);
    CHECK(s.semantics[1].prompt == "table");
    CHECK(s.semantics[1].azimuth_deg == 120);
    CHECK(s.grid_resolution == 64);
    CHECK(s.s0 == 70);
    CHECK(s.coarse.iterations == 1000);
    CHECK(s.refine.iterations == 2000);
    CHECK(s.appearance.iterations == 2000);
    CHECK(s.prior.mode == PriorMode::oracle);
    CHECK(s.prior.references.at("chair").primitive->kind == PrimitiveKind::box);
    CHECK(s.prior.references.at("table").primitive->half_height == 0.4);
    CHECK(s.warnings.empty());
    CHECK(s.observations().size() == 2);
}

TEST_CASE("semantics count and view spacing") {
    require_config_error("semantics: []\n", "semantics");
    require_config_error("grid_resolution: 8\n", "semantics: required");
    std::string five = "semantics:\n";
    for (int i = 0; i < 5; ++i) five += "  - {prompt: p" + std::to_string(i) + ", azimuth_deg: " + std::to_string(72 * i) + "}\n";
    five += "prior: {mode: remote}\n";
    require_config_error(five, "at most 4");

    const auto close = parse_scene_text(
        "semantics:\n  - {prompt: a, azimuth_deg: 0}\n  - {prompt: b, azimuth_deg: 30}\nprior: {mode: remote}\n");
    REQUIRE(close.warnings.size() == 1);
    CHECK(close.warnings[0].find("30.0 degrees") != std::string::npos);
}

TEST_CASE("unknown keys and syntax errors are located") {
    require_config_error("semantics:\n  - {prompt: a}\nprior: {mode: remote}\nrender:\n  imagesize: 32\n",
                         "render.imagesize: unknown key (line 5)");
    require_config_error("semantics:\n  - {prompt: a, colour: red}\n", "semantics[0].colour: unknown key (line 2)");
    require_config_error("semantics:\n  - {prompt: a\nseed: 1\n", "syntax error at line");
    require_config_error("semantics:\n  - {prompt: a}\nseed: lots\nprior: {mode: remote}\n", "seed: cannot parse 'lots' (line 3)");
    require_config_error("semantics:\n  - {prompt: a}\nstages:\n  coarse: {t_lo: 0.9, t_hi: 0.1}\nprior: {mode: remote}\n",
                         "stages.coarse");
    require_config_error("semantics:\n  - {prompt: a}\nprior: {mode: remote, endpoint: nowhere}\n", "prior.endpoint");
    require_config_error("semantics:\n  - {prompt: a}\n", "no reference for prompt 'a'");
    require_config_error(
        "semantics:\n  - {prompt: a}\nprior:\n  oracle_references:\n    a: {primitive: sphere, radius: 1.5}\n",
        "prior.oracle_references.a");
    require_config_error(
        "semantics:\n  - {prompt: a}\nprior:\n  oracle_references:\n    a: {primitive: cone}\n", "primitive");
}

TEST_CASE("referenced mesh files must exist and resolve against the scene") {
    const auto dir = scratch("mesh_ref");
    const std::string text =
        "semantics:\n  - {prompt: a}\ngrid_resolution: 8\nprior:\n  oracle_references:\n    a: {mesh: shapes/a.ply}\n";
    spit(dir / "scene.yaml", text);
    try {
        parse_scene((dir / "scene.yaml").string());
        FAIL("missing mesh accepted");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("file not found") != std::string::npos);
    }

    fs::create_directories(dir / "shapes");
    const auto grid = std::make_shared<const TetGrid>(16);
    write_ply(marching_tetrahedra(init_sphere<double>(grid, 0.5)), dir / "shapes" / "a.ply");
    const auto s = parse_scene((dir / "scene.yaml").string());
    CHECK(s.resolve(s.prior.references.at("a").mesh) == (dir / "shapes" / "a.ply").string());

    // The oracle builds its reference from the mesh.
    const auto priors = make_priors(s);
    auto* oracle = dynamic_cast<OraclePrior*>(priors.owner.get());
    REQUIRE(oracle);
    CHECK(oracle->has_reference("a"));
    CHECK(priors.set.supply_true_noise);

    CHECK_THROWS_AS(parse_scene((dir / "absent.yaml").string()), IoError);
}

TEST_CASE("normalized dump round trips") {
    const std::string text = tiny_scene(3, 4, 5,
                                        "s0: 0.1\ninit_radius: 0.30000000000000004\n"
                                        "prior:\n  oracle_resolution: 12\n  oracle_references:\n"
                                        "    ball: {primitive: sphere, center: [0.1, -0.2, 1e-3], radius: 0.3}\n"
                                        "    block: {primitive: box, albedo: [0.25, 0.5, 0.125]}\n");
    const auto a = parse_scene_text(text);
    const std::string dump = dump_scene(a);
    const auto b = parse_scene_text(dump);
    CHECK(dump_scene(b) == dump);
    CHECK(b.s0 == 0.1);
    CHECK(b.init_radius == 0.30000000000000004);
    CHECK(b.prior.references.at("ball").primitive->center.z == 1e-3);
    CHECK(b.prior.oracle_resolution == 12);
    CHECK(b.coarse.iterations == 3);
    CHECK(b.train.surround_offsets == a.train.surround_offsets);
    CHECK(dump.find("s0: 0.1\n") != std::string::npos);

    const auto reference = parse_scene(TF_SCENE_DIR "/reference.yaml");
    CHECK(reference.semantics.size() == 2);
    CHECK(dump_scene(parse_scene_text(dump_scene(reference))) == dump_scene(reference));
}

TEST_CASE("generate is deterministic and leaves its input alone") {
    const auto dir = scratch("generate");
    spit(dir / "scene.yaml", tiny_scene(100, 50, 50));
    const std::string before = slurp(dir / "scene.yaml");
    std::ostringstream out, err;
    REQUIRE(cmd_generate((dir / "scene.yaml").string(), (dir / "run1").string(), out, err) == kExitOk);
    REQUIRE(cmd_generate((dir / "scene.yaml").string(), (dir / "run2").string(), out, err) == kExitOk);
    CHECK(slurp(dir / "scene.yaml") == before);

    const std::string log = slurp(dir / "run1" / "diagnostics.log");
    CHECK(log == slurp(dir / "run2" / "diagnostics.log"));
    CHECK(slurp(dir / "run1" / "checkpoint.tfck") == slurp(dir / "run2" / "checkpoint.tfck"));
    // Header lines plus one line per 100 iterations.
    std::istringstream lines(log);
    std::string line;
    int data = 0;
    while (std::getline(lines, line)) data += !line.empty() && line[0] != '#';
    CHECK(data == 2);

    const auto spec = parse_scene((dir / "run1" / "scene.yaml").string());
    CHECK(dump_scene(spec) == slurp(dir / "run1" / "scene.yaml"));
    const auto state = load_checkpoint<double>((dir / "run1" / "checkpoint.tfck").string());
    CHECK(state.iteration == 200);
    REQUIRE(state.appearance);
    CHECK(state.appearance->resolution == 4);
}

TEST_CASE("zero-iteration stages leave the sphere initialisation") {
    const auto dir = scratch("zero");
    spit(dir / "scene.yaml", tiny_scene(0, 0, 0));
    std::ostringstream out, err;
    REQUIRE(cmd_generate((dir / "scene.yaml").string(), (dir / "run").string(), out, err) == kExitOk);
    const auto state = load_checkpoint<double>((dir / "run" / "checkpoint.tfck").string());
    const auto init = TrainState<double>::sphere(8, 0.5, 3);
    REQUIRE(state.field.values.size() == init.field.values.size());
    for (std::size_t i = 0; i < init.field.values.size(); ++i) {
        CHECK(state.field.values[i] == perturb_zero(double(float(init.field.values[i]))));
    }
    CHECK(state.iteration == 0);
}

TEST_CASE("divergence exits 3 with the diagnostic tail") {
    const auto dir = scratch("diverge");
    spit(dir / "scene.yaml", tiny_scene(80, 0, 0));
    FaultGuard fault("nan_grad");
    std::ostringstream out, err;
    CHECK(cmd_generate((dir / "scene.yaml").string(), (dir / "run").string(), out, err) == kExitDivergence);
    CHECK(err.str().find("diverged") != std::string::npos);
    CHECK(err.str().find("last steps") != std::string::npos);
    CHECK(err.str().find("# iter stage") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "run" / "checkpoint.tfck"));
}

TEST_CASE("configuration errors exit 2") {
    const auto dir = scratch("bad_scene");
    spit(dir / "scene.yaml", "semantics: []\n");
    std::ostringstream out, err;
    CHECK(cmd_generate((dir / "scene.yaml").string(), (dir / "run").string(), out, err) == kExitConfig);
    CHECK(cmd_generate((dir / "missing.yaml").string(), (dir / "run").string(), out, err) == kExitIo);
    CHECK(guarded(err, [] { return int(kExitOk); }) == kExitOk);
    CHECK(guarded(err, []() -> int { throw ProtocolError("x"); }) == kExitPrior);
    CHECK(guarded(err, []() -> int { throw PriorError("x"); }) == kExitPrior);
    CHECK(guarded(err, []() -> int { throw DivergenceError("x"); }) == kExitDivergence);
    CHECK(guarded(err, []() -> int { throw ContractError("x"); }) == kExitFailure);
}

TEST_CASE("extract writes a watertight sphere and handles empty surfaces") {
    const auto dir = scratch("extract");
    const auto sphere = TrainState<double>::sphere(16, 0.5, 1);
    save_checkpoint(sphere, (dir / "sphere.tfck").string());
    std::ostringstream out, err;
    REQUIRE(cmd_extract((dir / "sphere.tfck").string(), (dir / "sphere.ply").string(), true, out, err) == kExitOk);
    const Mesh m = read_ply(dir / "sphere.ply");
    const auto st = mesh_stats(m);
    CHECK(st.triangles > 0);
    CHECK(st.watertight);
    CHECK(st.euler == 2);
    CHECK(fs::exists(dir / "sphere.obj"));
    CHECK(err.str().empty());

    save_checkpoint(empty_state(), (dir / "empty.tfck").string());
    REQUIRE(cmd_extract((dir / "empty.tfck").string(), (dir / "empty.ply").string(), false, out, err) == kExitOk);
    CHECK(err.str().find("empty") != std::string::npos);
    CHECK(read_ply(dir / "empty.ply").triangles.empty());

    std::string bytes = slurp(dir / "sphere.tfck");
    bytes[0] = 'X';
    spit(dir / "bad.tfck", bytes);
    std::ostringstream err2;
    CHECK(cmd_extract((dir / "bad.tfck").string(), (dir / "bad.ply").string(), false, out, err2) == kExitIo);
    CHECK(err2.str().find("bad checkpoint magic") != std::string::npos);
}

TEST_CASE("render writes PNG and bit-exact PFM depth") {
    const auto dir = scratch("render");
    auto sphere = TrainState<double>::sphere(16, 0.5, 1);
    sphere.attach_appearance(2);
    save_checkpoint(sphere, (dir / "sphere.tfck").string());
    RenderRequest req;
    req.size = 40;
    std::ostringstream out, err;
    REQUIRE(cmd_render((dir / "sphere.tfck").string(), req, (dir / "front").string(), out, err) == kExitOk);
    const auto rgb = read_png(dir / "front_rgb.png");
    const auto normal = read_png(dir / "front_normal.png");
    const auto depth = read_pfm(dir / "front_depth.pfm");
    CHECK(rgb.width == 40);
    CHECK(rgb.height == 40);
    CHECK(rgb.channels == 3);
    CHECK(normal.width == 40);
    REQUIRE(depth.width == 40);

    const auto state = load_checkpoint<float>((dir / "sphere.tfck").string());
    const Camera cam = camera_from_angles(0, 0, 2.5, 40, 40, 40);
    RenderConfig rc = default_render_config(*state.field.grid, cam);
    rc.temperature = state.field.grid->cell_size();
    const auto g = render<float>(state.field, &*state.appearance, cam, rc);
    const std::size_t centre = std::size_t(20) * 40 + 20;
    CHECK(g.depth[centre] > 0.0f);
    CHECK(depth.data[centre] == g.depth[centre]);
    CHECK(depth.data == g.depth);
    // Grey albedo in the middle, facing the camera in the normal map.
    CHECK(rgb.data[3 * centre] == to_byte(g.rgb[3 * centre]));
    CHECK(normal.data[3 * centre + 2] > 250);
    CHECK(normal.data[0] == to_byte((double(g.normal[0]) + 1) / 2));

    save_checkpoint(empty_state(), (dir / "empty.tfck").string());
    REQUIRE(cmd_render((dir / "empty.tfck").string(), req, (dir / "bg").string(), out, err) == kExitOk);
    for (auto b : read_png(dir / "bg_normal.png").data) REQUIRE(b == 0);
    for (float d : read_pfm(dir / "bg_depth.pfm").data) REQUIRE(d == 0.0f);

    CHECK(cmd_render((dir / "sphere.tfck").string(), req, (dir / "no" / "such" / "dir").string(), out, err) == kExitIo);
}

TEST_CASE("PFM rows are stored bottom to top") {
    const auto dir = scratch("pfm");
    FloatImage img{2, 2, {1.0f, 2.0f, 3.0f, 4.0f}};
    write_pfm(img, dir / "a.pfm");
    const std::string bytes = slurp(dir / "a.pfm");
    REQUIRE(bytes.substr(0, 12) == "Pf\n2 2\n-1.0\n");
    float first;
    std::memcpy(&first, bytes.data() + 12, sizeof first);
    CHECK(first == 3.0f);
    CHECK(read_pfm(dir / "a.pfm").data == img.data);
}

TEST_CASE("validate passes and catches a corrupted case table") {
    std::ostringstream out, err;
    CHECK(cmd_validate(out, err) == kExitOk);
    CHECK(out.str().find("all checks passed") != std::string::npos);
    CHECK(out.str().find("FAIL") == std::string::npos);

    FaultGuard fault("case_table");
    std::ostringstream out2;
    CHECK(cmd_validate(out2, err) != kExitOk);
    const std::string table = out2.str();
    const auto row = table.find("marching-tet case matrix");
    REQUIRE(row != std::string::npos);
    CHECK(table.substr(row, table.find('\n', row) - row).find("FAIL") != std::string::npos);
}

TEST_CASE("probe-prior reports each failure distinctly") {
    {
        tftest::EchoServer server;
        std::ostringstream out, err;
        CHECK(cmd_probe_prior(server.endpoint().str(), 2000, out, err) == kExitOk);
        CHECK(out.str().find("echo-test") != std::string::npos);
        CHECK(out.str().find("response bytes equal the request tensor bytes") != std::string::npos);
    }
    {
        tftest::EchoServer server(tftest::EchoServer::Mode::bad_hello);
        std::ostringstream out, err;
        CHECK(cmd_probe_prior(server.endpoint().str(), 2000, out, err) == kExitPrior);
        CHECK(err.str().find("protocol mismatch") != std::string::npos);
    }
    int port;
    {
        tftest::EchoServer gone;
        port = gone.port();
    }
    const std::string where = "127.0.0.1:" + std::to_string(port);
    std::ostringstream out, err;
    CHECK(cmd_probe_prior(where, 500, out, err) == kExitPrior);
    CHECK(err.str().find("connection error") != std::string::npos);
    CHECK(err.str().find(where) != std::string::npos);
    CHECK(cmd_probe_prior("no-port", 500, out, err) == kExitConfig);
}

TEST_CASE("remote-mode scenes run against a prior service") {
    tftest::EchoServer server;
    const auto dir = scratch("remote");
    spit(dir / "scene.yaml", tiny_scene(3, 2, 2, "prior: {mode: remote, endpoint: \"" + server.endpoint().str() + "\"}\n"));
    std::ostringstream out, err;
    REQUIRE(cmd_generate((dir / "scene.yaml").string(), (dir / "run").string(), out, err) == kExitOk);
    CHECK(slurp(dir / "run" / "diagnostics.log").find("# prior echo-test") == 0);
    // The in-process noise never crosses the wire.
    for (const auto& h : server.headers()) CHECK_FALSE(h.contains("true_noise"));
}
