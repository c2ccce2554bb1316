#pragma once

// Spatial material field: a dense trilinear feature lattice over [-1,1]^3
// with 8 raw channels per lattice vertex, activated into albedo k_d,
// roughness k_r, metallic k_m and a tangent-space normal offset k_n.

#include "tetforge/vec3.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace tetforge {

inline constexpr int kMaterialChannels = 8;

// Raw channel layout per lattice vertex.
enum MaterialChannel : int { kAlbedoR = 0, kAlbedoG, kAlbedoB, kRoughness, kMetallic, kNormalX, kNormalY, kNormalZ };

template <typename Real>
struct AppearanceField {
    int resolution = 0;
    std::vector<Real> features; // kMaterialChannels * (resolution+1)^3, vertex-major

    std::size_t lattice_vertices() const noexcept {
        const std::size_t n = std::size_t(resolution) + 1;
        return n * n * n;
    }
};

// All raw features zero (mid-grey albedo, roughness and metallic 0.5).
template <typename Real>
AppearanceField<Real> make_appearance(int resolution);

template <typename Real>
struct MaterialSample {
    Vec3T<Real> kd;
    Real kr{};
    Real km{};
    Vec3T<Real> kn;
};

struct TrilinearStencil {
    std::array<std::size_t, 8> vertex; // lattice vertex index
    std::array<double, 8> weight;
};

// Throws DomainError outside [-1,1]^3.
TrilinearStencil trilinear_stencil(int resolution, const Vec3& point);

template <typename Real>
MaterialSample<Real> material_at(const AppearanceField<Real>& field, const Vec3& point);

// Raw (pre-activation) interpolated channels at a point.
template <typename Real>
std::array<Real, kMaterialChannels> raw_features_at(const AppearanceField<Real>& field, const TrilinearStencil& s);

template <typename Real>
MaterialSample<Real> activate(const std::array<Real, kMaterialChannels>& raw);

// Adds dL/dfeatures into grad given dL/d(material sample) at point.
template <typename Real>
void material_at_backward(const AppearanceField<Real>& field, const Vec3& point,
                          const MaterialSample<Real>& d_sample, std::span<Real> grad);

// View-independent shading under a uniform white environment: the albedo.
template <typename Real>
Vec3T<Real> shade(const MaterialSample<Real>& sample, const Vec3T<Real>& normal);

template <typename Real>
inline Real logistic(Real x) {
    return Real(1) / (Real(1) + std::exp(-x));
}

} // namespace tetforge
