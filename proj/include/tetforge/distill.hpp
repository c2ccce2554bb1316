#pragma once

// Local geometry-aware distillation: per-step gradient assembly against a
// multi-view noise predictor, the auxiliary 2D normal SDS term, adaptive
// moment updates, and the staged coarse / refine / appearance loops.

#include "tetforge/appearance.hpp"
#include "tetforge/diffusion.hpp"
#include "tetforge/guidance.hpp"
#include "tetforge/renderer.hpp"
#include "tetforge/tet_field.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tetforge {

enum class StageKind { coarse, refine, appearance };

const char* stage_name(StageKind kind);
StageKind parse_stage_kind(const std::string& name);

struct StageConfig {
    StageKind kind = StageKind::coarse;
    int iterations = 0;
    double t_lo = 0.02; // timestep fraction range of T
    double t_hi = 0.98;
    double learning_rate = 1e-2;
    double lambda_lgad = 1.0;
    double lambda_sds = 0.1;
    double lambda_eik = 0.1;
    double lambda_nc = 0.05;
    double tau_cells = 2.0; // render temperature in cells of the SDF grid

    // Throws ConfigError. Zero iterations are allowed (the stage is skipped).
    void validate() const;
};

// coarse: 1000 its, [0.02, 0.98], lr 1e-2, tau 2 cells
// refine: 2000 its, [0.02, 0.50], lr 5e-3, tau 1 cell
// appearance: 2000 its, [0.02, 0.75], lr 1e-2
StageConfig default_stage(StageKind kind);

struct TrainConfig {
    int image_size = 64;
    double camera_radius = 2.5;
    double fov_y_deg = 40;
    double step_cells = 0.5; // ray-march step in cells
    bool jitter = false;
    // Azimuth offsets of the extra views in the surrounding set, relative to the focus.
    std::vector<double> surround_offsets{90, 180, 270};
    int rejection_window = 500;
    double max_rejection_rate = 0.1;
    int log_every = 100;

    void validate() const;
};

// Noise predictors per map kind. Unowned; any may be null when unused.
struct PriorSet {
    NoisePredictor* nd = nullptr;
    NoisePredictor* rgbd = nullptr;
    NoisePredictor* normal2d = nullptr;
    // Attach the engine's own noise to requests (in-process oracle only;
    // never sent over the wire).
    bool supply_true_noise = false;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.99;
inline constexpr double kAdamEpsilon = 1e-8;

template <typename Real>
struct AdamState {
    std::vector<Real> m;
    std::vector<Real> v;
    std::int64_t step = 0;

    void reset(std::size_t n) {
        m.assign(n, Real(0));
        v.assign(n, Real(0));
        step = 0;
    }
};

// One bias-corrected adaptive-moment update; throws ContractError on length
// mismatch and DomainError on non-finite gradients (parameters untouched).
template <typename Real>
void optimizer_update(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
                      double learning_rate);

template <typename Real>
struct TrainState {
    SdfField<Real> field;
    std::optional<AppearanceField<Real>> appearance;
    AdamState<Real> field_moments;
    AdamState<Real> appearance_moments;
    std::int64_t iteration = 0;
    std::int64_t rejected = 0;
    std::mt19937_64 rng;
    std::deque<bool> recent; // rejection flags over the last rejection_window steps

    // Sphere-initialized field with matching zeroed moments.
    static TrainState sphere(int resolution, double radius, std::uint64_t seed);
    void attach_appearance(int resolution);
    void check() const;
};

struct StepDiagnostics {
    std::int64_t iteration = 0;
    StageKind stage = StageKind::coarse;
    std::size_t observation = 0;
    std::string prompt;
    double azimuth_deg = 0;
    double elevation_deg = 0;
    double scale = 0;
    int t = 0;
    double residual_rms = 0; // focus-slot residual
    double loss_lgad = 0;     // omega * mean squared residual
    double loss_sds = 0;
    double loss_eik = 0;
    double loss_nc = 0;
    bool rejected = false;
};

// Column order of the plain-text diagnostics stream.
std::string diagnostics_header();
std::string format_diagnostics(const StepDiagnostics& d);

// Knobs for tests and tooling; a default-constructed value gives the
// training behaviour.
struct StepOptions {
    std::optional<double> scale;            // replaces the view-adaptive scale
    std::optional<std::size_t> observation; // camera placed exactly at this observation view
    bool apply_update = true;
};

template <typename Real>
struct StepResult {
    StepDiagnostics diagnostics;
    std::vector<Real> field_grad;      // total gradient applied (empty for the appearance stage)
    std::vector<Real> appearance_grad; // empty for geometry stages
    std::vector<Real> lgad_field_grad; // prior term alone, geometry stages
};

// Render configuration used for a training render on this grid.
RenderConfig train_render_config(const TetGrid& grid, const Camera& camera, const TrainConfig& train,
                                 const StageConfig& stage, std::uint64_t seed);

// One iteration: sample a camera, render, noise the duplicated map across the
// surrounding views, query the prior with and without the prompt, combine,
// backpropagate the focus-view residual, add regularizers and update. A step
// whose gradient is not finite leaves parameters and moments untouched and
// is flagged rejected. PriorError propagates with parameters untouched.
template <typename Real>
StepResult<Real> lgad_step(TrainState<Real>& state, const ObservationSet& obs, const NoiseSchedule& schedule,
                           const PriorSet& priors, const TrainConfig& train, const StageConfig& stage,
                           const StepOptions& options = {});

template <typename Real>
struct AuxSdsResult {
    std::vector<Real> field_grad; // empty when lambda_sds = 0
    double loss = 0;
    double residual_rms = 0;
    std::vector<double> residual; // H*W*3
};

// Plain 2D score distillation on the rendered normal map of g (already
// rendered at camera), at timestep t with fresh noise from rng, combined with
// the same guidance scale. Skipped entirely when lambda_sds = 0.
template <typename Real>
AuxSdsResult<Real> aux_sds_step(const TrainState<Real>& state, const GBuffer<Real>& g, const Camera& camera,
                                const RenderConfig& render_config, const std::string& prompt, double scale, int t,
                                const NoiseSchedule& schedule, NoisePredictor* prior, bool supply_true_noise,
                                double lambda_sds, std::mt19937_64& rng);

struct StageHooks {
    std::ostream* log = nullptr; // one line per log_every iterations
    std::function<void(const StepDiagnostics&)> on_step;
    std::function<void(StageKind, std::int64_t)> on_snapshot;
    int snapshot_every = 0;
};

// Coarse then refine; the appearance field, if any, is left untouched.
// Throws DivergenceError when more than max_rejection_rate of the steps in
// the trailing window were rejected.
template <typename Real>
void run_geometry_stage(TrainState<Real>& state, const ObservationSet& obs, const NoiseSchedule& schedule,
                        const PriorSet& priors, const TrainConfig& train, const StageConfig& coarse,
                        const StageConfig& refine, const StageHooks& hooks = {});

// SDF values are frozen; only the appearance features move.
template <typename Real>
void run_appearance_stage(TrainState<Real>& state, const ObservationSet& obs, const NoiseSchedule& schedule,
                          const PriorSet& priors, const TrainConfig& train, const StageConfig& config,
                          const StageHooks& hooks = {});

// Checkpoint blob: "TFCK", u32 version, i32 grid resolution, i32 appearance
// resolution (0 = none), i64 iteration, u32 rng text length + rng text, then
// the SDF values and appearance features as little-endian float32.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
void save_checkpoint(const TrainState<Real>& state, const std::string& path);
template <typename Real>
TrainState<Real> load_checkpoint(const std::string& path);

// FNV-1a over the parameter bytes.
template <typename Real>
std::uint64_t parameter_checksum(const std::vector<Real>& values);

} // namespace tetforge

namespace tetforge {

// Agreement between a rendered view and a reference render of the same camera.
struct ViewAgreement {
    double depth_mae = 0;     // mean |depth - depth_ref| over pixels where either alpha > 0.5
    double normal_cosine = 0; // mean cos(n, n_ref) over reference pixels with alpha > 0.5; 0 where n = 0
    std::size_t union_pixels = 0;
    std::size_t reference_pixels = 0;
};

template <typename Real>
ViewAgreement compare_views(const GBuffer<Real>& g, const GBuffer<double>& reference);

} // namespace tetforge
