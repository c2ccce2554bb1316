#include "tetforge/distill.hpp"

#include "tetforge/error.hpp"
#include "tetforge/simd/kernels.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

namespace tetforge {

const char* stage_name(StageKind kind) {
    switch (kind) {
    case StageKind::coarse: return "coarse";
    case StageKind::refine: return "refine";
    case StageKind::appearance: return "appearance";
    }
    return "?";
}

StageKind parse_stage_kind(const std::string& name) {
    if (name == "coarse") return StageKind::coarse;
    if (name == "refine") return StageKind::refine;
    if (name == "appearance") return StageKind::appearance;
    throw ConfigError("unknown stage '" + name + "'");
}

void StageConfig::validate() const {
    const std::string where = std::string("stage ") + stage_name(kind) + ": ";
    if (iterations < 0) throw ConfigError(where + "iterations must be non-negative");
    if (!(t_lo >= 0.0 && t_lo < t_hi && t_hi <= 1.0)) throw ConfigError(where + "need 0 <= t_lo < t_hi <= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError(where + "learning rate must be > 0");
    for (double w : {lambda_lgad, lambda_sds, lambda_eik, lambda_nc}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError(where + "loss weights must be >= 0");
    }
    if (!(tau_cells > 0.0) || !std::isfinite(tau_cells)) throw ConfigError(where + "tau must be > 0");
}

StageConfig default_stage(StageKind kind) {
    StageConfig c;
    c.kind = kind;
    switch (kind) {
    case StageKind::coarse:
        c.iterations = 1000;
        c.t_lo = 0.02;
        c.t_hi = 0.98;
        c.learning_rate = 1e-2;
        c.tau_cells = 2.0;
        break;
    case StageKind::refine:
        c.iterations = 2000;
        c.t_lo = 0.02;
        c.t_hi = 0.50;
        c.learning_rate = 5e-3;
        c.tau_cells = 1.0;
        break;
    case StageKind::appearance:
        c.iterations = 2000;
        c.t_lo = 0.02;
        c.t_hi = 0.75;
        c.learning_rate = 1e-2;
        c.lambda_sds = 0;
        c.lambda_eik = 0;
        c.lambda_nc = 0;
        c.tau_cells = 1.0;
        break;
    }
    return c;
}

void TrainConfig::validate() const {
    if (image_size < 1 || image_size > 4096) throw ConfigError("image size must be in [1, 4096]");
    if (!(step_cells > 0.0)) throw ConfigError("ray step must be > 0 cells");
    if (surround_offsets.size() + 1 > kMaxViews) throw ConfigError("too many surrounding views");
    if (rejection_window < 1) throw ConfigError("rejection window must be >= 1");
    if (!(max_rejection_rate >= 0.0 && max_rejection_rate <= 1.0)) {
        throw ConfigError("max rejection rate must be in [0, 1]");
    }
    if (log_every < 1) throw ConfigError("log interval must be >= 1");
}

template <typename Real>
void optimizer_update(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
                      double learning_rate) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("optimizer_update: length mismatch");
    }
    for (Real g : grads)
        if (!std::isfinite(double(g))) throw DomainError("optimizer_update: non-finite gradient");
    const std::int64_t step = state.step + 1;
    simd::AdamCoefficients<Real> c{Real(learning_rate),
                                   Real(kAdamBeta1),
                                   Real(kAdamBeta2),
                                   Real(kAdamEpsilon),
                                   Real(1.0 - std::pow(kAdamBeta1, double(step))),
                                   Real(1.0 - std::pow(kAdamBeta2, double(step)))};
    simd::adam<Real>(params, grads, state.m, state.v, c);
    state.step = step;
}

template <typename Real>
TrainState<Real> TrainState<Real>::sphere(int resolution, double radius, std::uint64_t seed) {
    TrainState s;
    s.field = init_sphere<Real>(std::make_shared<const TetGrid>(resolution), radius);
    s.field_moments.reset(s.field.size());
    s.rng.seed(seed);
    return s;
}

template <typename Real>
void TrainState<Real>::attach_appearance(int resolution) {
    appearance = make_appearance<Real>(resolution);
    appearance_moments.reset(appearance->features.size());
}

template <typename Real>
void TrainState<Real>::check() const {
    if (!field.grid || field.values.size() != field.grid->vertex_count()) {
        throw ContractError("train state: field does not match its grid");
    }
    if (field_moments.m.size() != field.size() || field_moments.v.size() != field.size()) {
        throw ContractError("train state: field moments do not match the field");
    }
    const std::size_t na = appearance ? appearance->features.size() : 0;
    if (appearance && (appearance_moments.m.size() != na || appearance_moments.v.size() != na)) {
        throw ContractError("train state: appearance moments do not match the features");
    }
}

std::string diagnostics_header() {
    return "# iter stage obs az el s t residual_rms lgad sds eikonal nc rejected";
}

std::string format_diagnostics(const StepDiagnostics& d) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld %s %zu %.3f %.3f %.6g %d %.6e %.6e %.6e %.6e %.6e %d",
                  static_cast<long long>(d.iteration), stage_name(d.stage), d.observation, d.azimuth_deg,
                  d.elevation_deg, d.scale, d.t, d.residual_rms, d.loss_lgad, d.loss_sds, d.loss_eik, d.loss_nc,
                  d.rejected ? 1 : 0);
    return buf;
}

RenderConfig train_render_config(const TetGrid& grid, const Camera& camera, const TrainConfig& train,
                                 const StageConfig& stage, std::uint64_t seed) {
    RenderConfig c = default_render_config(grid, camera);
    c.step_size = train.step_cells * grid.cell_size();
    c.temperature = stage.tau_cells * grid.cell_size();
    c.jitter = train.jitter;
    c.seed = seed;
    return c;
}

namespace {

bool fault_enabled(const char* mode) {
    const char* v = std::getenv("TF_FAULT");
    return v && std::strcmp(v, mode) == 0;
}

template <typename Real>
bool all_finite(const std::vector<Real>& v) {
    for (Real x : v)
        if (!std::isfinite(double(x))) return false;
    return true;
}

// Scatters a packed H*W*C cotangent into the GBuffer channels it was packed from.
template <typename Real>
void scatter_cotangent(std::span<const double> packed, MapKind kind, GBuffer<Real>& out) {
    const int c = map_channels(kind);
    std::vector<Real>& color = kind == MapKind::rgbd ? out.rgb : out.normal;
    for (std::size_t p = 0; p < out.pixels(); ++p) {
        const double* s = packed.data() + p * c;
        color[3 * p] = Real(s[0]);
        color[3 * p + 1] = Real(s[1]);
        color[3 * p + 2] = Real(s[2]);
        if (c == 4) out.depth[p] = Real(s[3]);
    }
}

struct GuidedResidual {
    std::vector<double> residual; // focus slot
    double rms = 0;
};

// Queries the prior with and without the prompt and returns the combined
// prediction minus the injected noise, restricted to the focus slot.
GuidedResidual guided_residual(NoisePredictor& prior, PriorRequest request, const std::vector<double>& eps,
                               bool supply_true_noise, double scale) {
    if (supply_true_noise) request.true_noise = eps;
    const PriorResponse cond = prior.predict(request);
    request.unconditional = true;
    const PriorResponse uncond = prior.predict(request);
    if (cond.noise.size() != eps.size() || uncond.noise.size() != eps.size()) {
        throw PriorError("prior response shape does not match the request", false);
    }
    std::vector<double> guided(eps.size());
    cfg_combine(cond.noise, uncond.noise, scale, guided);

    const std::size_t n = request.view_elements();
    const std::size_t off = request.focus * n;
    GuidedResidual r;
    r.residual.resize(n);
    simd::sub<double>(std::span(guided).subspan(off, n), std::span(eps).subspan(off, n), r.residual);
    double ss = 0;
    for (double x : r.residual) ss += x * x;
    r.rms = n ? std::sqrt(ss / double(n)) : 0.0;
    return r;
}

int sample_timestep(const NoiseSchedule& schedule, const StageConfig& stage, std::mt19937_64& rng) {
    const int T = schedule.steps;
    int lo = std::max(1, int(std::ceil(stage.t_lo * T)));
    int hi = std::min(T, int(std::floor(stage.t_hi * T)));
    if (hi < lo) hi = lo;
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double wrap_degrees(double a) {
    a = std::fmod(a, 360.0);
    return a < 0 ? a + 360.0 : a;
}

} // namespace

template <typename Real>
AuxSdsResult<Real> aux_sds_step(const TrainState<Real>& state, const GBuffer<Real>& g, const Camera& camera,
                                const RenderConfig& render_config, const std::string& prompt, double scale, int t,
                                const NoiseSchedule& schedule, NoisePredictor* prior, bool supply_true_noise,
                                double lambda_sds, std::mt19937_64& rng) {
    AuxSdsResult<Real> out;
    if (lambda_sds == 0.0) return out;
    if (!prior) throw ConfigError("auxiliary normal SDS needs a normal2d prior");

    const std::vector<double> n0 = pack_map(g, MapKind::normal2d);
    const std::vector<double> eps = standard_normal(rng, n0.size());
    std::vector<double> nt(n0.size());
    add_noise(n0, t, eps, schedule, nt);

    PriorRequest req;
    req.seq = std::uint64_t(state.iteration) * 4 + 3;
    req.kind = MapKind::normal2d;
    req.t = t;
    req.prompt = prompt;
    req.views = {{camera.azimuth_deg, camera.elevation_deg}};
    req.height = g.height;
    req.width = g.width;
    req.tensors = std::move(nt);
    auto r = guided_residual(*prior, std::move(req), eps, supply_true_noise, scale);

    const double omega = schedule.omega(t);
    double ss = 0;
    for (double x : r.residual) ss += x * x;
    out.loss = omega * ss / double(std::max<std::size_t>(1, r.residual.size()));
    out.residual_rms = r.rms;

    std::vector<double> cot(r.residual.size());
    for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = lambda_sds * omega * r.residual[i];
    GBuffer<Real> cbuf = GBuffer<Real>::zeros(g.width, g.height, false);
    scatter_cotangent<Real>(cot, MapKind::normal2d, cbuf);
    out.field_grad = render_backward<Real>(state.field, nullptr, camera, render_config, cbuf).field;
    out.residual = std::move(r.residual);
    return out;
}

template <typename Real>
StepResult<Real> lgad_step(TrainState<Real>& state, const ObservationSet& obs, const NoiseSchedule& schedule,
                           const PriorSet& priors, const TrainConfig& train, const StageConfig& stage,
                           const StepOptions& options) {
    const bool geometry = stage.kind != StageKind::appearance;
    const MapKind kind = geometry ? MapKind::nd : MapKind::rgbd;
    NoisePredictor* prior = geometry ? priors.nd : priors.rgbd;
    if (!prior) throw ConfigError(std::string("no prior configured for ") + map_kind_name(kind) + " maps");
    if (!geometry && !state.appearance) throw ContractError("appearance stage without an appearance field");

    const int size = train.image_size;
    const CameraSample cs =
        options.observation
            ? camera_near(obs, *options.observation, 0, 0, train.camera_radius, train.fov_y_deg, size, size)
            : sample_camera(obs, state.rng, train.camera_radius, train.fov_y_deg, size, size);
    const double scale = options.scale.value_or(cs.scale);
    const int t = sample_timestep(schedule, stage, state.rng);
    const std::uint64_t render_seed = state.rng();

    const TetGrid& grid = *state.field.grid;
    const RenderConfig rc = train_render_config(grid, cs.camera, train, stage, render_seed);
    const AppearanceField<Real>* app = geometry ? nullptr : &*state.appearance;
    const GBuffer<Real> g = render<Real>(state.field, app, cs.camera, rc);
    const std::vector<double> g0 = pack_map(g, kind);

    PriorRequest req;
    req.seq = std::uint64_t(state.iteration) * 4 + 1;
    req.kind = kind;
    req.t = t;
    req.prompt = cs.prompt;
    req.views.push_back({cs.camera.azimuth_deg, cs.camera.elevation_deg});
    for (double off : train.surround_offsets)
        req.views.push_back({wrap_degrees(cs.camera.azimuth_deg + off), cs.camera.elevation_deg});
    req.focus = 0;
    req.height = g.height;
    req.width = g.width;

    const std::size_t nviews = req.views.size();
    const std::vector<double> eps = standard_normal(state.rng, nviews * g0.size());
    const std::vector<double> dup = duplicate_views(g0, nviews);
    req.tensors.resize(dup.size());
    add_noise(dup, t, eps, schedule, req.tensors);
    const GuidedResidual gr = guided_residual(*prior, std::move(req), eps, priors.supply_true_noise, scale);

    StepResult<Real> result;
    StepDiagnostics& d = result.diagnostics;
    d.iteration = state.iteration + 1;
    d.stage = stage.kind;
    d.observation = cs.observation;
    d.prompt = cs.prompt;
    d.azimuth_deg = cs.camera.azimuth_deg;
    d.elevation_deg = cs.camera.elevation_deg;
    d.scale = scale;
    d.t = t;
    d.residual_rms = gr.rms;

    const double omega = schedule.omega(t);
    d.loss_lgad = omega * gr.rms * gr.rms;

    std::vector<double> cot(gr.residual.size());
    for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = stage.lambda_lgad * omega * gr.residual[i];
    GBuffer<Real> cbuf = GBuffer<Real>::zeros(g.width, g.height, g.has_rgb());
    scatter_cotangent<Real>(cot, kind, cbuf);
    RenderGradients<Real> rg = render_backward<Real>(state.field, app, cs.camera, rc, cbuf);

    bool finite = true;
    if (geometry) {
        result.lgad_field_grad = rg.field;
        result.field_grad = std::move(rg.field);
        auto aux = aux_sds_step<Real>(state, g, cs.camera, rc, cs.prompt, scale, t, schedule, priors.normal2d,
                                      priors.supply_true_noise, stage.lambda_sds, state.rng);
        d.loss_sds = aux.loss;
        if (!aux.field_grad.empty()) {
            for (std::size_t i = 0; i < result.field_grad.size(); ++i) result.field_grad[i] += aux.field_grad[i];
        }
        if (stage.lambda_eik > 0) {
            d.loss_eik = double(eikonal_loss<Real>(state.field, result.field_grad, Real(stage.lambda_eik)));
        } else {
            d.loss_eik = double(eikonal_loss<Real>(state.field));
        }
        if (stage.lambda_nc > 0) {
            d.loss_nc = double(normal_consistency_loss<Real>(state.field, result.field_grad, Real(stage.lambda_nc)));
        } else {
            d.loss_nc = double(normal_consistency_loss<Real>(state.field));
        }
        if (fault_enabled("nan_grad") && !result.field_grad.empty()) {
            result.field_grad[0] = std::numeric_limits<Real>::quiet_NaN();
        }
        finite = all_finite(result.field_grad);
    } else {
        result.appearance_grad = std::move(rg.appearance);
        if (fault_enabled("nan_grad") && !result.appearance_grad.empty()) {
            result.appearance_grad[0] = std::numeric_limits<Real>::quiet_NaN();
        }
        finite = all_finite(result.appearance_grad);
    }

    d.rejected = !finite;
    if (finite && options.apply_update) {
        if (geometry) {
            optimizer_update<Real>(state.field.values, result.field_grad, state.field_moments, stage.learning_rate);
            state.field.apply_zero_perturbation();
        } else {
            optimizer_update<Real>(state.appearance->features, result.appearance_grad, state.appearance_moments,
                                   stage.learning_rate);
        }
    }
    state.iteration += 1;
    if (d.rejected) state.rejected += 1;
    return result;
}

namespace {

template <typename Real>
void run_stage(TrainState<Real>& state, const ObservationSet& obs, const NoiseSchedule& schedule,
               const PriorSet& priors, const TrainConfig& train, const StageConfig& stage,
               const StageHooks& hooks) {
    stage.validate();
    train.validate();
    obs.validate();
    state.check();
    if (stage.iterations == 0) return;
    if (stage.kind == StageKind::appearance) {
        if (!priors.rgbd) throw ConfigError("appearance stage needs an rgbd prior");
        if (!state.appearance) throw ConfigError("appearance stage needs an appearance field");
    } else {
        if (!priors.nd) throw ConfigError("geometry stages need an nd prior");
        if (stage.lambda_sds > 0 && !priors.normal2d) {
            throw ConfigError("lambda_sds > 0 needs a normal2d prior");
        }
    }

    const std::size_t window = std::size_t(train.rejection_window);
    const double limit = train.max_rejection_rate * double(window);
    for (int i = 0; i < stage.iterations; ++i) {
        const StepResult<Real> r = lgad_step(state, obs, schedule, priors, train, stage);
        state.recent.push_back(r.diagnostics.rejected);
        while (state.recent.size() > window) state.recent.pop_front();
        std::size_t bad = 0;
        for (bool b : state.recent) bad += b;

        if (hooks.on_step) hooks.on_step(r.diagnostics);
        if (hooks.log && state.iteration % train.log_every == 0) *hooks.log << format_diagnostics(r.diagnostics) << '\n';
        if (double(bad) > limit) {
            if (hooks.log) *hooks.log << format_diagnostics(r.diagnostics) << '\n';
            throw DivergenceError(std::to_string(bad) + " of the last " + std::to_string(state.recent.size()) +
                                  " steps were rejected (stage " + stage_name(stage.kind) + ", iteration " +
                                  std::to_string(state.iteration) + ")");
        }
        if (hooks.on_snapshot && hooks.snapshot_every > 0 && (i + 1) % hooks.snapshot_every == 0) {
            hooks.on_snapshot(stage.kind, state.iteration);
        }
    }
    if (hooks.log) hooks.log->flush();
}

} // namespace

template <typename Real>
void run_geometry_stage(TrainState<Real>& state, const ObservationSet& obs, const NoiseSchedule& schedule,
                        const PriorSet& priors, const TrainConfig& train, const StageConfig& coarse,
                        const StageConfig& refine, const StageHooks& hooks) {
    if (coarse.kind == StageKind::appearance || refine.kind == StageKind::appearance) {
        throw ConfigError("geometry stages cannot use the appearance stage kind");
    }
    run_stage(state, obs, schedule, priors, train, coarse, hooks);
    run_stage(state, obs, schedule, priors, train, refine, hooks);
}

template <typename Real>
void run_appearance_stage(TrainState<Real>& state, const ObservationSet& obs, const NoiseSchedule& schedule,
                          const PriorSet& priors, const TrainConfig& train, const StageConfig& config,
                          const StageHooks& hooks) {
    if (config.kind != StageKind::appearance) throw ConfigError("appearance stage needs the appearance kind");
    run_stage(state, obs, schedule, priors, train, config, hooks);
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated checkpoint: " + path);
    return v;
}

template <typename Real>
void put_floats(std::ostream& out, const std::vector<Real>& values) {
    std::vector<float> buf(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
}

template <typename Real>
std::vector<Real> get_floats(std::istream& in, std::size_t n, const std::string& path) {
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint: " + path);
    return {buf.begin(), buf.end()};
}

} // namespace

template <typename Real>
void save_checkpoint(const TrainState<Real>& state, const std::string& path) {
    state.check();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    std::ostringstream rng_text;
    rng_text << state.rng;
    const std::string rng = rng_text.str();

    out.write("TFCK", 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::int32_t>(out, state.field.grid->resolution());
    put<std::int32_t>(out, state.appearance ? state.appearance->resolution : 0);
    put<std::int64_t>(out, state.iteration);
    put<std::uint32_t>(out, std::uint32_t(rng.size()));
    out.write(rng.data(), std::streamsize(rng.size()));
    put_floats(out, state.field.values);
    if (state.appearance) put_floats(out, state.appearance->features);
    out.flush();
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

template <typename Real>
TrainState<Real> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TFCK", 4) != 0) throw IoError("bad checkpoint magic: " + path);
    const auto version = get<std::uint32_t>(in, path);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + "): " + path);
    }
    const auto res = get<std::int32_t>(in, path);
    const auto app_res = get<std::int32_t>(in, path);
    const auto iteration = get<std::int64_t>(in, path);
    const auto rng_len = get<std::uint32_t>(in, path);
    if (res < 1 || res > TetGrid::kMaxResolution || app_res < 0 || app_res > 1024 || rng_len > (1u << 16)) {
        throw IoError("corrupt checkpoint header: " + path);
    }
    std::string rng(rng_len, '\0');
    in.read(rng.data(), rng_len);
    if (!in) throw IoError("truncated checkpoint: " + path);

    TrainState<Real> s;
    s.field.grid = std::make_shared<const TetGrid>(res);
    s.field.values = get_floats<Real>(in, s.field.grid->vertex_count(), path);
    s.field.apply_zero_perturbation();
    s.field_moments.reset(s.field.size());
    if (app_res > 0) {
        s.attach_appearance(app_res);
        s.appearance->features = get_floats<Real>(in, s.appearance->features.size(), path);
    }
    in.peek();
    if (!in.eof()) throw IoError("trailing bytes in checkpoint: " + path);
    std::istringstream rng_in(rng);
    rng_in >> s.rng;
    if (!rng_in) throw IoError("corrupt rng state in checkpoint: " + path);
    s.iteration = iteration;
    return s;
}

template <typename Real>
std::uint64_t parameter_checksum(const std::vector<Real>& values) {
    std::uint64_t h = 14695981039346656037ull;
    const auto* p = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size() * sizeof(Real); ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

#define TF_DISTILL_INSTANTIATE(Real)                                                                              \
    template void optimizer_update<Real>(std::span<Real>, std::span<const Real>, AdamState<Real>&, double);      \
    template struct TrainState<Real>;                                                                            \
    template AuxSdsResult<Real> aux_sds_step<Real>(const TrainState<Real>&, const GBuffer<Real>&, const Camera&, \
                                                   const RenderConfig&, const std::string&, double, int,         \
                                                   const NoiseSchedule&, NoisePredictor*, bool, double,          \
                                                   std::mt19937_64&);                                            \
    template StepResult<Real> lgad_step<Real>(TrainState<Real>&, const ObservationSet&, const NoiseSchedule&,    \
                                              const PriorSet&, const TrainConfig&, const StageConfig&,           \
                                              const StepOptions&);                                               \
    template void run_geometry_stage<Real>(TrainState<Real>&, const ObservationSet&, const NoiseSchedule&,       \
                                           const PriorSet&, const TrainConfig&, const StageConfig&,              \
                                           const StageConfig&, const StageHooks&);                               \
    template void run_appearance_stage<Real>(TrainState<Real>&, const ObservationSet&, const NoiseSchedule&,     \
                                             const PriorSet&, const TrainConfig&, const StageConfig&,            \
                                             const StageHooks&);                                                 \
    template void save_checkpoint<Real>(const TrainState<Real>&, const std::string&);                            \
    template TrainState<Real> load_checkpoint<Real>(const std::string&);                                         \
    template std::uint64_t parameter_checksum<Real>(const std::vector<Real>&);

TF_DISTILL_INSTANTIATE(float)
TF_DISTILL_INSTANTIATE(double)

#undef TF_DISTILL_INSTANTIATE

} // namespace tetforge

namespace tetforge {

template <typename Real>
ViewAgreement compare_views(const GBuffer<Real>& g, const GBuffer<double>& ref) {
    if (g.width != ref.width || g.height != ref.height) throw ContractError("compare_views: size mismatch");
    ViewAgreement a;
    double depth_sum = 0, cos_sum = 0;
    for (std::size_t p = 0; p < g.pixels(); ++p) {
        const bool fg = double(g.alpha[p]) > 0.5;
        const bool ref_fg = ref.alpha[p] > 0.5;
        if (fg || ref_fg) {
            depth_sum += std::abs(double(g.depth[p]) - ref.depth[p]);
            ++a.union_pixels;
        }
        if (ref_fg) {
            const Vec3 n{double(g.normal[3 * p]), double(g.normal[3 * p + 1]), double(g.normal[3 * p + 2])};
            const Vec3 r{ref.normal[3 * p], ref.normal[3 * p + 1], ref.normal[3 * p + 2]};
            const double nn = norm(n) * norm(r);
            cos_sum += nn > 0 ? dot(n, r) / nn : 0.0;
            ++a.reference_pixels;
        }
    }
    a.depth_mae = a.union_pixels ? depth_sum / double(a.union_pixels) : 0.0;
    a.normal_cosine = a.reference_pixels ? cos_sum / double(a.reference_pixels) : 0.0;
    return a;
}

template ViewAgreement compare_views<float>(const GBuffer<float>&, const GBuffer<double>&);
template ViewAgreement compare_views<double>(const GBuffer<double>&, const GBuffer<double>&);

} // namespace tetforge
