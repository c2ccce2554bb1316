#pragma once

// Differentiable ray-marched rendering of a tetrahedral SDF (and optional
// appearance field) into normal / depth / alpha / RGB maps, with the exact
// reverse-mode derivative of that map.
//
// Per ray, samples x_j sit at distances near + (j + o) * step inside the
// domain cube (o is the stratified jitter offset, 0 when jitter is off).
// Segment j between x_j and x_{j+1} has opacity
//
//   alpha_j = clamp((Phi(f_j/tau) - Phi(f_{j+1}/tau)) / max(Phi(f_j/tau), 1e-6), 0, 1)
//
// with Phi the logistic function, and compositing weight
// w_j = alpha_j * prod_{k<j} (1 - alpha_k). Depth uses the segment midpoint.

#include "tetforge/appearance.hpp"
#include "tetforge/tet_field.hpp"

#include <cstdint>
#include <type_traits>
#include <vector>

namespace tetforge {

struct Camera {
    double azimuth_deg = 0;
    double elevation_deg = 0;
    double radius = 2.5;
    double fov_y_deg = 40;
    int width = 64;
    int height = 64;
    Vec3 target{};   // look-at point
    Vec3 position{}; // target + radius * view direction
    Vec3 forward{};  // unit, from camera toward target
    Vec3 right{};
    Vec3 up{};

    // Unit direction from the target toward the camera.
    Vec3 direction() const { return (position - target) / radius; }
    // World-space unit ray through the centre of pixel (px, py); py = 0 is the top row.
    Vec3 ray_direction(int px, int py) const;
};

// Unit view direction for (azimuth, elevation) with z up:
// (cos el cos az, cos el sin az, sin el).
Vec3 view_direction(double azimuth_deg, double elevation_deg);

Camera camera_from_angles(double azimuth_deg, double elevation_deg, double radius, double fov_y_deg, int width,
                          int height, const Vec3& target = {});

struct RenderConfig {
    double step_size = 0;
    double temperature = 0; // tau
    double near = 0;
    double far = 0;
    bool jitter = false;
    std::uint64_t seed = 0;
};

// step = cell/2, tau = 2 cells, near/far = radius -/+ 1.
RenderConfig default_render_config(const TetGrid& grid, const Camera& camera);

void validate_render_config(const RenderConfig& config, const TetGrid& grid);

// Alpha below which a pixel is background (normal and depth forced to 0).
inline constexpr double kBackgroundAlpha = 1e-4;

template <typename Real>
struct GBuffer {
    int width = 0;
    int height = 0;
    std::vector<Real> normal; // H*W*3, camera space (x right, y up, z toward camera)
    std::vector<Real> depth;  // H*W
    std::vector<Real> alpha;  // H*W
    std::vector<Real> rgb;    // H*W*3, empty without an appearance field

    std::size_t pixels() const noexcept { return std::size_t(width) * height; }
    bool has_rgb() const noexcept { return !rgb.empty(); }

    // Zero-filled buffer of the given shape.
    static GBuffer zeros(int width, int height, bool with_rgb);
};

template <typename Real>
GBuffer<Real> render(const SdfField<Real>& field, const std::type_identity_t<AppearanceField<Real>>* appearance, const Camera& camera,
                     const RenderConfig& config);

template <typename Real>
struct RenderGradients {
    std::vector<Real> field;      // per SDF vertex
    std::vector<Real> appearance; // per appearance feature (empty without appearance)
};

// Exact reverse-mode derivative of render() contracted with a GBuffer-shaped
// cotangent. The cotangent must match the forward output shape.
template <typename Real>
RenderGradients<Real> render_backward(const SdfField<Real>& field, const std::type_identity_t<AppearanceField<Real>>* appearance,
                                      const Camera& camera, const RenderConfig& config,
                                      const GBuffer<Real>& cotangent);

// Un-normalized ray depth recovered from a stored depth/alpha pair.
double raw_depth(double stored_depth, double alpha, const RenderConfig& config);

// H*W*C channel-interleaved map: ND (normal xyz, depth), RGBD (rgb, depth),
// or plain normals (C = 3).
template <typename Real>
struct PackedMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<Real> data;
};

template <typename Real>
PackedMap<Real> nd_pack(const GBuffer<Real>& g);

// Inverse of nd_pack: fills the normal and depth channels of out.
template <typename Real>
void nd_unpack(const PackedMap<Real>& nd, GBuffer<Real>& out);

template <typename Real>
PackedMap<Real> rgbd_pack(const GBuffer<Real>& g);

template <typename Real>
PackedMap<Real> normal_pack(const GBuffer<Real>& g);

} // namespace tetforge
