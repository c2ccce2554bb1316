#include "tetforge/renderer.hpp"

#include "tetforge/error.hpp"
#include "tetforge/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace tetforge {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kPhiFloor = 1e-6;
constexpr double kAlphaFloor = 1e-6;

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer; maps (seed, pixel) to an independent jitter draw.
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double jitter_offset(const RenderConfig& config, std::size_t pixel) {
    if (!config.jitter) return 0.0;
    const std::uint64_t h = mix64(config.seed * 0x100000001b3ULL ^ mix64(pixel));
    return double(h >> 11) * 0x1.0p-53;
}

// Ray parameter interval inside [-1,1]^3, intersected with [lo, hi].
bool clip_to_domain(const Vec3& o, const Vec3& d, double lo, double hi, double& t0, double& t1) {
    t0 = lo;
    t1 = hi;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-300) {
            if (o[a] < -1.0 || o[a] > 1.0) return false;
            continue;
        }
        double ta = (-1.0 - o[a]) / d[a];
        double tb = (1.0 - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

template <typename Real>
struct RaySample {
    double s;
    Vec3 x;
    TetGrid::Location loc;
    Real f;
    Vec3T<Real> grad;
    Vec3T<Real> color;
};

template <typename Real>
struct Segment {
    Real alpha;
    Real transmittance; // prod_{k<j} (1 - alpha_k)
    Real weight;
    double mid;
    // dalpha/df_j, dalpha/df_{j+1}
    Real da_dfa;
    Real da_dfb;
};

template <typename Real>
struct PixelState {
    std::vector<RaySample<Real>> samples;
    std::vector<Segment<Real>> segments;
    Real A = 0;
    Real D = 0;
    Vec3T<Real> V{};
    Vec3T<Real> C{};
};

template <typename Real>
void march(const SdfField<Real>& field, const AppearanceField<Real>* appearance, const Camera& cam,
           const RenderConfig& cfg, int px, int py, PixelState<Real>& st) {
    st.samples.clear();
    st.segments.clear();
    st.A = 0;
    st.D = 0;
    st.V = {};
    st.C = {};

    const Vec3 dir = cam.ray_direction(px, py);
    double t0, t1;
    if (!clip_to_domain(cam.position, dir, cfg.near, cfg.far, t0, t1)) return;

    const double offset = jitter_offset(cfg, std::size_t(py) * cam.width + px);
    const double step = cfg.step_size;
    const long j0 = long(std::ceil((t0 - cfg.near) / step - offset));
    const long j1 = long(std::floor((t1 - cfg.near) / step - offset));
    if (j1 - j0 < 1) return;

    const TetGrid& grid = *field.grid;
    for (long j = j0; j <= j1; ++j) {
        RaySample<Real> s;
        s.s = cfg.near + (double(j) + offset) * step;
        s.x = cam.position + dir * s.s;
        for (int a = 0; a < 3; ++a) s.x[a] = std::clamp(s.x[a], -1.0, 1.0);
        s.loc = grid.locate(s.x);
        std::array<Real, 4> fv{};
        Real f = 0;
        for (int q = 0; q < 4; ++q) {
            fv[q] = field.values[s.loc.vertices[q]];
            f += Real(s.loc.weights[q]) * fv[q];
        }
        s.f = f;
        s.grad = tet_gradient(grid, s.loc.perm, fv);
        if (appearance) s.color = shade(material_at(*appearance, s.x), s.grad);
        st.samples.push_back(s);
    }

    const Real inv_tau = Real(1.0 / cfg.temperature);
    Real T = 1;
    for (std::size_t j = 0; j + 1 < st.samples.size(); ++j) {
        const auto& a = st.samples[j];
        const auto& b = st.samples[j + 1];
        const Real phi_a = logistic(a.f * inv_tau);
        const Real phi_b = logistic(b.f * inv_tau);
        const Real denom = std::max(phi_a, Real(kPhiFloor));
        const Real raw = (phi_a - phi_b) / denom;
        Segment<Real> seg{};
        seg.alpha = std::clamp(raw, Real(0), Real(1));
        seg.transmittance = T;
        seg.weight = seg.alpha * T;
        seg.mid = 0.5 * (a.s + b.s);
        if (raw > Real(0) && raw < Real(1)) {
            const Real dphi_a = phi_a * (Real(1) - phi_a) * inv_tau;
            const Real dphi_b = phi_b * (Real(1) - phi_b) * inv_tau;
            const Real dden = phi_a > Real(kPhiFloor) ? Real(1) : Real(0);
            // d/dphi_a of (phi_a - phi_b)/denom
            const Real d_phi_a = (denom - (phi_a - phi_b) * dden) / (denom * denom);
            seg.da_dfa = d_phi_a * dphi_a;
            seg.da_dfb = -dphi_b / denom;
        }
        T = T * (Real(1) - seg.alpha);
        st.A += seg.weight;
        st.D += seg.weight * Real(seg.mid);
        st.V += a.grad * seg.weight;
        if (appearance) st.C += a.color * seg.weight;
        st.segments.push_back(seg);
    }
}

template <typename Real>
Vec3T<Real> to_camera(const Camera& cam, const Vec3T<Real>& v) {
    const Vec3T<Real> r = cam.right.cast<Real>(), u = cam.up.cast<Real>(), b = (-cam.forward).cast<Real>();
    return {dot(v, r), dot(v, u), dot(v, b)};
}

template <typename Real>
Vec3T<Real> from_camera(const Camera& cam, const Vec3T<Real>& c) {
    const Vec3T<Real> r = cam.right.cast<Real>(), u = cam.up.cast<Real>(), b = (-cam.forward).cast<Real>();
    return r * c.x + u * c.y + b * c.z;
}

void check_scene(const TetGrid& grid, const Camera& cam, const RenderConfig& cfg) {
    validate_render_config(cfg, grid);
    const Vec3& p = cam.position;
    if (std::abs(p.x) <= 1.0 && std::abs(p.y) <= 1.0 && std::abs(p.z) <= 1.0) {
        throw ConfigError("camera must lie outside the domain cube");
    }
}

} // namespace

Vec3 view_direction(double azimuth_deg, double elevation_deg) {
    const double az = azimuth_deg * kDegToRad, el = elevation_deg * kDegToRad;
    return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

Camera camera_from_angles(double azimuth_deg, double elevation_deg, double radius, double fov_y_deg, int width,
                          int height, const Vec3& target) {
    if (!(radius > std::sqrt(3.0))) throw ConfigError("camera radius must exceed sqrt(3), got " + std::to_string(radius));
    if (width < 1 || width > 4096 || height < 1 || height > 4096) {
        throw ConfigError("image size must be within [1, 4096], got " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    if (!(elevation_deg >= -89.0 && elevation_deg <= 89.0)) {
        throw ConfigError("camera elevation must be within [-89, 89] degrees, got " + std::to_string(elevation_deg));
    }
    if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0)) {
        throw ConfigError("fov_y must be within (0, 180) degrees, got " + std::to_string(fov_y_deg));
    }
    Camera c;
    c.azimuth_deg = azimuth_deg;
    c.elevation_deg = elevation_deg;
    c.radius = radius;
    c.fov_y_deg = fov_y_deg;
    c.width = width;
    c.height = height;
    c.target = target;
    const Vec3 dir = view_direction(azimuth_deg, elevation_deg);
    c.position = target + dir * radius;
    c.forward = -dir;
    c.right = normalized(cross(c.forward, Vec3{0, 0, 1}));
    c.up = cross(c.right, c.forward);
    return c;
}

Vec3 Camera::ray_direction(int px, int py) const {
    const double t = std::tan(0.5 * fov_y_deg * kDegToRad);
    const double aspect = double(width) / double(height);
    const double x = ((px + 0.5) / width * 2.0 - 1.0) * t * aspect;
    const double y = (1.0 - (py + 0.5) / height * 2.0) * t;
    return normalized(forward + right * x + up * y);
}

RenderConfig default_render_config(const TetGrid& grid, const Camera& camera) {
    RenderConfig c;
    c.step_size = 0.5 * grid.cell_size();
    c.temperature = 2.0 * grid.cell_size();
    c.near = camera.radius - 1.0;
    c.far = camera.radius + 1.0;
    return c;
}

void validate_render_config(const RenderConfig& c, const TetGrid& grid) {
    if (!(c.step_size > 0.0 && c.step_size <= grid.cell_size() * (1.0 + 1e-12))) {
        throw ConfigError("render step_size must be in (0, cell_size], got " + std::to_string(c.step_size));
    }
    if (!(c.temperature > 0.0)) throw ConfigError("render temperature must be positive");
    if (!(c.near > 0.0 && c.near < c.far)) throw ConfigError("render requires 0 < near < far");
}

double raw_depth(double stored_depth, double alpha, const RenderConfig& c) {
    if (alpha < kBackgroundAlpha) return 0.0;
    return c.far - stored_depth * (c.far - c.near) / alpha;
}

template <typename Real>
GBuffer<Real> GBuffer<Real>::zeros(int width, int height, bool with_rgb) {
    GBuffer g;
    g.width = width;
    g.height = height;
    const std::size_t n = std::size_t(width) * height;
    g.normal.assign(3 * n, Real(0));
    g.depth.assign(n, Real(0));
    g.alpha.assign(n, Real(0));
    if (with_rgb) g.rgb.assign(3 * n, Real(0));
    return g;
}

template <typename Real>
GBuffer<Real> render(const SdfField<Real>& field, const std::type_identity_t<AppearanceField<Real>>* appearance, const Camera& cam,
                     const RenderConfig& cfg) {
    check_scene(*field.grid, cam, cfg);
    auto out = GBuffer<Real>::zeros(cam.width, cam.height, appearance != nullptr);
    const Real depth_scale = Real(1.0 / (cfg.far - cfg.near));
    const Real far = Real(cfg.far);

    parallel_chunks(std::size_t(cam.height), 1, [&](std::size_t, std::size_t r0, std::size_t r1) {
        PixelState<Real> st;
        for (std::size_t py = r0; py < r1; ++py)
            for (int px = 0; px < cam.width; ++px) {
                march(field, appearance, cam, cfg, px, int(py), st);
                const std::size_t p = py * cam.width + px;
                out.alpha[p] = st.A;
                if (appearance) {
                    const Real bg = Real(1) - st.A;
                    out.rgb[3 * p + 0] = st.C.x + bg;
                    out.rgb[3 * p + 1] = st.C.y + bg;
                    out.rgb[3 * p + 2] = st.C.z + bg;
                }
                if (st.A < Real(kBackgroundAlpha)) continue;
                out.depth[p] = (far * st.A - st.D) * depth_scale;
                const Real len = norm(st.V);
                if (len > Real(0)) {
                    Vec3T<Real> n = st.V / len;
                    if (dot(n, cam.ray_direction(px, int(py)).cast<Real>()) > Real(0)) n = -n;
                    const auto c = to_camera(cam, n);
                    out.normal[3 * p + 0] = c.x;
                    out.normal[3 * p + 1] = c.y;
                    out.normal[3 * p + 2] = c.z;
                }
            }
    });
    return out;
}

template <typename Real>
RenderGradients<Real> render_backward(const SdfField<Real>& field, const std::type_identity_t<AppearanceField<Real>>* appearance,
                                      const Camera& cam, const RenderConfig& cfg, const GBuffer<Real>& cot) {
    check_scene(*field.grid, cam, cfg);
    const std::size_t n = std::size_t(cam.width) * cam.height;
    if (cot.width != cam.width || cot.height != cam.height || cot.normal.size() != 3 * n || cot.depth.size() != n ||
        cot.alpha.size() != n || cot.has_rgb() != (appearance != nullptr) || (cot.has_rgb() && cot.rgb.size() != 3 * n)) {
        throw ContractError("render_backward: cotangent shape does not match the forward render");
    }

    RenderGradients<Real> out;
    out.field.assign(field.values.size(), Real(0));
    if (appearance) out.appearance.assign(appearance->features.size(), Real(0));

    const TetGrid& grid = *field.grid;
    const Real depth_scale = Real(1.0 / (cfg.far - cfg.near));
    const Real far = Real(cfg.far);

    // Per-row sparse contributions, merged afterwards in pixel order so the
    // result does not depend on scheduling.
    struct RowContrib {
        std::vector<std::pair<Index, Real>> field;
        std::vector<std::pair<Vec3, Vec3T<Real>>> color; // (point, dL/dkd)
    };
    std::vector<RowContrib> rows(std::size_t(cam.height));

    parallel_chunks(std::size_t(cam.height), 1, [&](std::size_t, std::size_t r0, std::size_t r1) {
        PixelState<Real> st;
        std::vector<Real> df;
        std::vector<Vec3T<Real>> dg;
        std::vector<Real> dw;
        for (std::size_t py = r0; py < r1; ++py) {
            RowContrib& rc = rows[py];
            for (int px = 0; px < cam.width; ++px) {
                const std::size_t p = py * cam.width + px;
                march(field, appearance, cam, cfg, px, int(py), st);
                const std::size_t ns = st.samples.size();
                if (ns < 2) continue;

                Real dA = cot.alpha[p];
                Real dD = 0;
                Vec3T<Real> dV{};
                Vec3T<Real> dC{};
                if (appearance) {
                    dC = {cot.rgb[3 * p], cot.rgb[3 * p + 1], cot.rgb[3 * p + 2]};
                    dA -= dC.x + dC.y + dC.z;
                }
                if (st.A >= Real(kBackgroundAlpha)) {
                    dA += cot.depth[p] * far * depth_scale;
                    dD = -cot.depth[p] * depth_scale;
                    const Real len = norm(st.V);
                    if (len > Real(0)) {
                        const Vec3T<Real> u = st.V / len;
                        const Real sign = dot(u, cam.ray_direction(px, int(py)).cast<Real>()) > Real(0) ? Real(-1) : Real(1);
                        const Vec3T<Real> dn{cot.normal[3 * p], cot.normal[3 * p + 1], cot.normal[3 * p + 2]};
                        const Vec3T<Real> du = from_camera(cam, dn) * sign;
                        dV = (du - u * dot(u, du)) / len;
                    }
                }

                df.assign(ns, Real(0));
                dg.assign(ns, Vec3T<Real>{});
                dw.assign(ns - 1, Real(0));
                for (std::size_t j = 0; j + 1 < ns; ++j) {
                    const auto& seg = st.segments[j];
                    const auto& s = st.samples[j];
                    dw[j] = dA + dD * Real(seg.mid) + dot(dV, s.grad);
                    dg[j] = dV * seg.weight;
                    if (appearance) {
                        dw[j] += dot(dC, s.color);
                        if (seg.weight != Real(0) && dC != Vec3T<Real>{}) rc.color.emplace_back(s.x, dC * seg.weight);
                    }
                }
                // Reverse sweep over transmittance: G_j = dL/dT_j.
                Real G = 0;
                for (std::size_t jj = ns - 1; jj-- > 0;) {
                    const auto& seg = st.segments[jj];
                    const Real d_alpha = (dw[jj] - G) * seg.transmittance;
                    G = dw[jj] * seg.alpha + G * (Real(1) - seg.alpha);
                    df[jj] += d_alpha * seg.da_dfa;
                    df[jj + 1] += d_alpha * seg.da_dfb;
                }
                for (std::size_t j = 0; j < ns; ++j) {
                    const auto& s = st.samples[j];
                    if (df[j] == Real(0) && dg[j] == Vec3T<Real>{}) continue;
                    const auto& bg = grid.barycentric_gradients(s.loc.perm);
                    for (int q = 0; q < 4; ++q) {
                        const Real v = Real(s.loc.weights[q]) * df[j] + dot(bg[q].template cast<Real>(), dg[j]);
                        if (v != Real(0)) rc.field.emplace_back(s.loc.vertices[q], v);
                    }
                }
            }
        }
    });

    for (const auto& rc : rows) {
        for (const auto& [v, g] : rc.field) out.field[v] += g;
        if (appearance) {
            for (const auto& [x, dkd] : rc.color) {
                MaterialSample<Real> d{};
                d.kd = dkd;
                material_at_backward(*appearance, x, d, std::span<Real>(out.appearance));
            }
        }
    }
    return out;
}

template <typename Real>
PackedMap<Real> nd_pack(const GBuffer<Real>& g) {
    PackedMap<Real> m{g.width, g.height, 4, std::vector<Real>(4 * g.pixels())};
    for (std::size_t p = 0; p < g.pixels(); ++p) {
        m.data[4 * p + 0] = g.normal[3 * p + 0];
        m.data[4 * p + 1] = g.normal[3 * p + 1];
        m.data[4 * p + 2] = g.normal[3 * p + 2];
        m.data[4 * p + 3] = g.depth[p];
    }
    return m;
}

template <typename Real>
void nd_unpack(const PackedMap<Real>& m, GBuffer<Real>& g) {
    if (m.channels != 4) throw ContractError("nd_unpack expects 4 channels");
    const std::size_t n = std::size_t(m.width) * m.height;
    g.width = m.width;
    g.height = m.height;
    g.normal.resize(3 * n);
    g.depth.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        g.normal[3 * p + 0] = m.data[4 * p + 0];
        g.normal[3 * p + 1] = m.data[4 * p + 1];
        g.normal[3 * p + 2] = m.data[4 * p + 2];
        g.depth[p] = m.data[4 * p + 3];
    }
}

template <typename Real>
PackedMap<Real> rgbd_pack(const GBuffer<Real>& g) {
    if (!g.has_rgb()) throw ContractError("rgbd_pack requires an RGB channel");
    PackedMap<Real> m{g.width, g.height, 4, std::vector<Real>(4 * g.pixels())};
    for (std::size_t p = 0; p < g.pixels(); ++p) {
        m.data[4 * p + 0] = g.rgb[3 * p + 0];
        m.data[4 * p + 1] = g.rgb[3 * p + 1];
        m.data[4 * p + 2] = g.rgb[3 * p + 2];
        m.data[4 * p + 3] = g.depth[p];
    }
    return m;
}

template <typename Real>
PackedMap<Real> normal_pack(const GBuffer<Real>& g) {
    return {g.width, g.height, 3, g.normal};
}

#define TF_INSTANTIATE(Real)                                                                                  \
    template struct GBuffer<Real>;                                                                            \
    template GBuffer<Real> render<Real>(const SdfField<Real>&, const AppearanceField<Real>*, const Camera&,   \
                                        const RenderConfig&);                                                 \
    template RenderGradients<Real> render_backward<Real>(const SdfField<Real>&, const AppearanceField<Real>*, \
                                                         const Camera&, const RenderConfig&,                  \
                                                         const GBuffer<Real>&);                               \
    template PackedMap<Real> nd_pack<Real>(const GBuffer<Real>&);                                             \
    template void nd_unpack<Real>(const PackedMap<Real>&, GBuffer<Real>&);                                    \
    template PackedMap<Real> rgbd_pack<Real>(const GBuffer<Real>&);                                           \
    template PackedMap<Real> normal_pack<Real>(const GBuffer<Real>&);

TF_INSTANTIATE(float)
TF_INSTANTIATE(double)

#undef TF_INSTANTIATE

} // namespace tetforge
