#pragma once

// Self-checks shared by `tetforge validate` and the acceptance binary. Each
// returns a named pass/fail line with the measured quantity in `detail`.

#include "tetforge/distill.hpp"
#include "tetforge/shapes.hpp"

#include <string>
#include <vector>

namespace tetforge::cli {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0;
};

// s/s0 at az 30 between views at az 0 and 90, zero at the bisector, s0 at a view.
CheckResult check_guidance_scale();
// Analytic renderer gradients against central differences on an 8^3 grid.
CheckResult check_renderer_gradients(int vertices = 50);
// Sphere(0.5) at 64^3: centre depth and mean angular normal error.
CheckResult check_sphere_oracle();
// All 16 sign cases against the reference triangle counts.
CheckResult check_case_matrix();
// Sphere(0.6) at 64^3: watertight, Euler 2, vertex deviation bound.
CheckResult check_sphere_extraction();
// Plane and scaled-plane regularizer values.
CheckResult check_regularizer_oracles();
// LGAD gradient norm ratio between s = 40 and s = 20.
CheckResult check_cfg_linearity();
// Mean and variance of add_noise at alpha_bar 0.25 over 1e4 samples.
CheckResult check_ddpm_statistics();

// The suite run by `tetforge validate`.
std::vector<CheckResult> validation_suite();

// Fixed two-semantic oracle scene on a 32^3 grid: a box seen from az 0 and a
// cylinder seen from az 90.
struct ClosedLoopScene {
    int resolution = 32;
    Primitive box{PrimitiveKind::box, {}, 0.5, {0.4, 0.5, 0.5}, 0.5};
    Primitive cylinder{PrimitiveKind::cylinder, {}, 0.5, {0.5, 0.5, 0.5}, 0.5};
    int coarse_iterations = 500;
    int refine_iterations = 500;
    double coarse_tau_cells = 1; // sharper than the coarse default so box edges resolve in 500 steps
    std::uint64_t seed = 7;
};

struct ClosedLoopResult {
    ViewAgreement views[2];
    std::uint64_t checksum = 0;
    double seconds = 0;
};

ClosedLoopResult run_closed_loop(const ClosedLoopScene& scene);

struct AppearanceLoopResult {
    double kd_error = 0;    // mean |k_d - (1,0,0)| over the surface seen from the observation view
    std::size_t pixels = 0; // surface samples behind kd_error
    bool sdf_unchanged = false;
    double seconds = 0;
};

// The logistic albedo activation saturates near pure red, so the 500-step
// loop uses a larger step than the appearance default.
inline constexpr double kAppearanceLoopLearningRate = 0.05;

// A uniform-red sphere observed from az 0 on a 32^3 grid, appearance stage only.
AppearanceLoopResult run_appearance_loop(int iterations = 500,
                                         double learning_rate = kAppearanceLoopLearningRate);

// Reference RGB for the oracle: an albedo held by a one-cell appearance
// lattice (channels clamped to [1e-4, 1 - 1e-4] before the logit).
AppearanceField<double> uniform_albedo(const Vec3& albedo);

} // namespace tetforge::cli
