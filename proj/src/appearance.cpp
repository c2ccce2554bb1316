#include "tetforge/appearance.hpp"

#include "tetforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tetforge {

template <typename Real>
AppearanceField<Real> make_appearance(int resolution) {
    if (resolution < 1 || resolution > 512) {
        throw ConfigError("appearance resolution must be in [1, 512], got " + std::to_string(resolution));
    }
    AppearanceField<Real> f;
    f.resolution = resolution;
    f.features.assign(kMaterialChannels * f.lattice_vertices(), Real(0));
    return f;
}

TrilinearStencil trilinear_stencil(int resolution, const Vec3& p) {
    constexpr double tol = 1e-9;
    const double cell = 2.0 / resolution;
    const std::size_t n = std::size_t(resolution) + 1;
    std::array<int, 3> c{};
    std::array<double, 3> u{};
    for (int a = 0; a < 3; ++a) {
        if (!(p[a] >= -1.0 - tol && p[a] <= 1.0 + tol)) {
            throw DomainError("material query outside [-1,1]^3");
        }
        const double s = (p[a] + 1.0) / cell;
        c[a] = std::clamp(int(std::floor(s)), 0, resolution - 1);
        u[a] = std::clamp(s - c[a], 0.0, 1.0);
    }
    TrilinearStencil st;
    for (int b = 0; b < 8; ++b) {
        const int dx = b & 1, dy = (b >> 1) & 1, dz = (b >> 2) & 1;
        st.vertex[b] = std::size_t(c[0] + dx) + n * (std::size_t(c[1] + dy) + n * std::size_t(c[2] + dz));
        st.weight[b] = (dx ? u[0] : 1.0 - u[0]) * (dy ? u[1] : 1.0 - u[1]) * (dz ? u[2] : 1.0 - u[2]);
    }
    return st;
}

template <typename Real>
std::array<Real, kMaterialChannels> raw_features_at(const AppearanceField<Real>& field, const TrilinearStencil& s) {
    std::array<Real, kMaterialChannels> raw{};
    for (int b = 0; b < 8; ++b) {
        const Real w = Real(s.weight[b]);
        const Real* f = field.features.data() + kMaterialChannels * s.vertex[b];
        for (int ch = 0; ch < kMaterialChannels; ++ch) raw[ch] += w * f[ch];
    }
    return raw;
}

template <typename Real>
MaterialSample<Real> activate(const std::array<Real, kMaterialChannels>& raw) {
    MaterialSample<Real> m;
    m.kd = {logistic(raw[kAlbedoR]), logistic(raw[kAlbedoG]), logistic(raw[kAlbedoB])};
    m.kr = logistic(raw[kRoughness]);
    m.km = logistic(raw[kMetallic]);
    m.kn = {std::tanh(raw[kNormalX]), std::tanh(raw[kNormalY]), std::tanh(raw[kNormalZ])};
    return m;
}

template <typename Real>
MaterialSample<Real> material_at(const AppearanceField<Real>& field, const Vec3& point) {
    return activate(raw_features_at(field, trilinear_stencil(field.resolution, point)));
}

template <typename Real>
void material_at_backward(const AppearanceField<Real>& field, const Vec3& point, const MaterialSample<Real>& d,
                          std::span<Real> grad) {
    if (grad.size() != field.features.size()) throw ContractError("appearance gradient buffer has wrong length");
    const auto st = trilinear_stencil(field.resolution, point);
    const auto m = activate(raw_features_at(field, st));
    std::array<Real, kMaterialChannels> d_raw{};
    for (int a = 0; a < 3; ++a) {
        d_raw[kAlbedoR + a] = d.kd[a] * m.kd[a] * (Real(1) - m.kd[a]);
        d_raw[kNormalX + a] = d.kn[a] * (Real(1) - m.kn[a] * m.kn[a]);
    }
    d_raw[kRoughness] = d.kr * m.kr * (Real(1) - m.kr);
    d_raw[kMetallic] = d.km * m.km * (Real(1) - m.km);
    for (int b = 0; b < 8; ++b) {
        const Real w = Real(st.weight[b]);
        Real* g = grad.data() + kMaterialChannels * st.vertex[b];
        for (int ch = 0; ch < kMaterialChannels; ++ch) g[ch] += w * d_raw[ch];
    }
}

template <typename Real>
Vec3T<Real> shade(const MaterialSample<Real>& sample, const Vec3T<Real>&) {
    return sample.kd;
}

#define TF_INSTANTIATE(Real)                                                                               \
    template AppearanceField<Real> make_appearance<Real>(int);                                             \
    template std::array<Real, kMaterialChannels> raw_features_at<Real>(const AppearanceField<Real>&,       \
                                                                       const TrilinearStencil&);           \
    template MaterialSample<Real> activate<Real>(const std::array<Real, kMaterialChannels>&);               \
    template MaterialSample<Real> material_at<Real>(const AppearanceField<Real>&, const Vec3&);            \
    template void material_at_backward<Real>(const AppearanceField<Real>&, const Vec3&,                    \
                                             const MaterialSample<Real>&, std::span<Real>);                \
    template Vec3T<Real> shade<Real>(const MaterialSample<Real>&, const Vec3T<Real>&);

TF_INSTANTIATE(float)
TF_INSTANTIATE(double)

#undef TF_INSTANTIATE

} // namespace tetforge
