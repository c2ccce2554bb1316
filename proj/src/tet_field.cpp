#include "tetforge/tet_field.hpp"

#include "slabs.hpp"
#include "tetforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tetforge {
namespace {

constexpr int corner_bit(int axis) { return 1 << axis; }

// Cube-corner indices (dx + 2dy + 4dz) of the path vertices for each perm.
constexpr std::array<std::array<int, 4>, 6> make_path_corners() {
    std::array<std::array<int, 4>, 6> out{};
    for (int p = 0; p < 6; ++p) {
        const auto& perm = TetGrid::kPermutations[p];
        out[p][0] = 0;
        out[p][1] = corner_bit(perm[0]);
        out[p][2] = corner_bit(perm[0]) | corner_bit(perm[1]);
        out[p][3] = 7;
    }
    return out;
}

constexpr auto kPathCorners = make_path_corners();

constexpr bool is_odd_permutation(int p) { return p == 1 || p == 2 || p == 5; }

template <typename Real>
struct CellCorners {
    std::array<Index, 8> index;
    std::array<Real, 8> value;
};

template <typename Real>
CellCorners<Real> load_cell(const SdfField<Real>& field, int i, int j, int k) {
    const TetGrid& g = *field.grid;
    CellCorners<Real> c;
    for (int b = 0; b < 8; ++b) {
        c.index[b] = g.vertex_index(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
        c.value[b] = field.values[c.index[b]];
    }
    return c;
}

template <typename Real>
std::array<Real, 4> path_values(const CellCorners<Real>& c, int perm) {
    const auto& pc = kPathCorners[perm];
    return {c.value[pc[0]], c.value[pc[1]], c.value[pc[2]], c.value[pc[3]]};
}

// Adds dL/df for the path vertices given dL/d(gradient).
template <typename Real>
void scatter_gradient(const Vec3T<Real>& dg, int perm, Real inv_h, const CellCorners<Real>& c,
                      std::span<Real> grad) {
    const auto& perm_axes = TetGrid::kPermutations[perm];
    const Real ga = dg[perm_axes[0]];
    const Real gb = dg[perm_axes[1]];
    const Real gc = dg[perm_axes[2]];
    const auto& pc = kPathCorners[perm];
    grad[c.index[pc[0]]] += -ga * inv_h;
    grad[c.index[pc[1]]] += (ga - gb) * inv_h;
    grad[c.index[pc[2]]] += (gb - gc) * inv_h;
    grad[c.index[pc[3]]] += gc * inv_h;
}

} // namespace

TetGrid::TetGrid(int resolution) : resolution_(resolution), n_(resolution + 1), cell_(0.0) {
    if (resolution < 1 || resolution > kMaxResolution) {
        throw ConfigError("grid resolution must be in [1, " + std::to_string(kMaxResolution) + "], got " +
                          std::to_string(resolution));
    }
    cell_ = 2.0 / resolution;
    for (int p = 0; p < 6; ++p) {
        const auto& perm = kPermutations[p];
        Vec3 ea{}, eb{}, ec{};
        ea[perm[0]] = 1.0 / cell_;
        eb[perm[1]] = 1.0 / cell_;
        ec[perm[2]] = 1.0 / cell_;
        bary_grad_[p] = {-ea, ea - eb, eb - ec, ec};
    }
}

TetGrid build_grid(int resolution) { return TetGrid(resolution); }

std::size_t TetGrid::edge_count() const noexcept {
    std::size_t total = 0;
    for (const auto& d : kEdgeDirections) {
        total += std::size_t(n_ - d[0]) * std::size_t(n_ - d[1]) * std::size_t(n_ - d[2]);
    }
    return total;
}

Vec3 TetGrid::vertex(Index v) const noexcept {
    const auto c = vertex_coords(v);
    return {-1.0 + c[0] * cell_, -1.0 + c[1] * cell_, -1.0 + c[2] * cell_};
}

std::array<Index, 4> TetGrid::tet_path(std::size_t tet) const noexcept {
    const std::size_t cell = tet / 6;
    const int perm = int(tet % 6);
    const int i = int(cell % resolution_);
    const int j = int((cell / resolution_) % resolution_);
    const int k = int(cell / (std::size_t(resolution_) * resolution_));
    std::array<Index, 4> out{};
    for (int q = 0; q < 4; ++q) {
        const int b = kPathCorners[perm][q];
        out[q] = vertex_index(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
    }
    return out;
}

std::array<Index, 4> TetGrid::tet(std::size_t tet) const noexcept {
    auto v = tet_path(tet);
    if (is_odd_permutation(int(tet % 6))) std::swap(v[2], v[3]);
    return v;
}

TetGrid::Location TetGrid::locate(const Vec3& p) const {
    constexpr double tol = 1e-9;
    for (int a = 0; a < 3; ++a) {
        if (!(p[a] >= -1.0 - tol && p[a] <= 1.0 + tol)) {
            throw DomainError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " +
                              std::to_string(p.z) + ") lies outside [-1,1]^3");
        }
    }
    std::array<int, 3> cell{};
    std::array<double, 3> u{};
    for (int a = 0; a < 3; ++a) {
        const double s = (p[a] + 1.0) / cell_;
        cell[a] = std::clamp(int(std::floor(s)), 0, resolution_ - 1);
        u[a] = std::clamp(s - cell[a], 0.0, 1.0);
    }
    int perm = 0;
    for (; perm < 5; ++perm) {
        const auto& q = kPermutations[perm];
        if (u[q[0]] >= u[q[1]] && u[q[1]] >= u[q[2]]) break;
    }
    const auto& q = kPermutations[perm];
    Location loc;
    loc.perm = perm;
    loc.tet = 6 * (std::size_t(cell[0]) + std::size_t(resolution_) * (cell[1] + std::size_t(resolution_) * cell[2])) +
              std::size_t(perm);
    loc.weights = {1.0 - u[q[0]], u[q[0]] - u[q[1]], u[q[1]] - u[q[2]], u[q[2]]};
    for (int v = 0; v < 4; ++v) {
        const int b = kPathCorners[perm][v];
        loc.vertices[v] = vertex_index(cell[0] + (b & 1), cell[1] + ((b >> 1) & 1), cell[2] + ((b >> 2) & 1));
    }
    return loc;
}

std::vector<Vec3> TetGrid::vertices() const {
    std::vector<Vec3> out(vertex_count());
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = vertex(Index(v));
    return out;
}

std::vector<std::array<Index, 4>> TetGrid::tets() const {
    std::vector<std::array<Index, 4>> out(tet_count());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = tet(t);
    return out;
}

std::vector<std::array<Index, 2>> TetGrid::edges() const {
    std::vector<std::array<Index, 2>> out;
    out.reserve(edge_count());
    for (int k = 0; k < n_; ++k)
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i)
                for (const auto& d : kEdgeDirections) {
                    if (i + d[0] < n_ && j + d[1] < n_ && k + d[2] < n_) {
                        out.push_back({vertex_index(i, j, k), vertex_index(i + d[0], j + d[1], k + d[2])});
                    }
                }
    return out;
}

template <typename Real>
void SdfField<Real>::apply_zero_perturbation() {
    for (auto& v : values) v = perturb_zero(v);
}

template <typename Real>
SdfField<Real> field_from_function(std::shared_ptr<const TetGrid> grid,
                                   const std::function<double(const Vec3&)>& fn) {
    SdfField<Real> field{grid, std::vector<Real>(grid->vertex_count())};
    for (std::size_t v = 0; v < field.values.size(); ++v) {
        field.values[v] = perturb_zero(Real(fn(grid->vertex(Index(v)))));
    }
    return field;
}

template <typename Real>
SdfField<Real> init_sphere(std::shared_ptr<const TetGrid> grid, double radius) {
    if (!(radius > 0.0 && radius < 1.0)) {
        throw ConfigError("sphere radius must be in (0, 1), got " + std::to_string(radius));
    }
    return field_from_function<Real>(std::move(grid), [radius](const Vec3& p) { return norm(p) - radius; });
}

template <typename Real>
Vec3T<Real> tet_gradient(const TetGrid& grid, int perm, const std::array<Real, 4>& f) {
    const Real inv_h = Real(1.0 / grid.cell_size());
    const auto& q = TetGrid::kPermutations[perm];
    Vec3T<Real> g{};
    g[q[0]] = (f[1] - f[0]) * inv_h;
    g[q[1]] = (f[2] - f[1]) * inv_h;
    g[q[2]] = (f[3] - f[2]) * inv_h;
    return g;
}

template <typename Real>
SdfSample<Real> sdf_at(const SdfField<Real>& field, const Vec3& point) {
    const auto loc = field.grid->locate(point);
    std::array<Real, 4> f{};
    Real value = 0;
    for (int q = 0; q < 4; ++q) {
        f[q] = field.values[loc.vertices[q]];
        value += Real(loc.weights[q]) * f[q];
    }
    return {value, tet_gradient(*field.grid, loc.perm, f), loc.tet};
}

namespace {

template <typename Real>
Real eikonal_impl(const SdfField<Real>& field, std::span<Real> grad, Real weight) {
    const TetGrid& g = *field.grid;
    const int R = g.resolution();
    const Real inv_h = Real(1.0 / g.cell_size());
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != field.values.size()) {
        throw ContractError("eikonal gradient buffer has wrong length");
    }
    std::vector<Real> partial(std::size_t(R), Real(0));
    auto slab = [&](std::size_t kk) {
        const int k = int(kk);
        Real sum = 0;
        for (int j = 0; j < R; ++j)
            for (int i = 0; i < R; ++i) {
                const auto c = load_cell(field, i, j, k);
                for (int p = 0; p < 6; ++p) {
                    const auto gv = tet_gradient(g, p, path_values(c, p));
                    const Real len = norm(gv);
                    const Real dev = len - Real(1);
                    sum += dev * dev;
                    if (want_grad && len > Real(0)) {
                        const Vec3T<Real> dg = gv * (weight * Real(2) * dev / len);
                        scatter_gradient(dg, p, inv_h, c, grad);
                    }
                }
            }
        partial[kk] = sum;
    };
    if (want_grad) {
        detail::for_slabs_two_phase(std::size_t(R), slab);
    } else {
        detail::for_slabs(std::size_t(R), slab);
    }
    return detail::ordered_sum(partial);
}

// Sum of incident tet gradients and incident tet counts per vertex.
template <typename Real>
void accumulate_vertex_gradients(const SdfField<Real>& field, std::vector<Vec3T<Real>>& sum,
                                 std::vector<std::uint8_t>& count) {
    const TetGrid& g = *field.grid;
    const int R = g.resolution();
    sum.assign(g.vertex_count(), Vec3T<Real>{});
    count.assign(g.vertex_count(), 0);
    detail::for_slabs_two_phase(std::size_t(R), [&](std::size_t kk) {
        const int k = int(kk);
        for (int j = 0; j < R; ++j)
            for (int i = 0; i < R; ++i) {
                const auto c = load_cell(field, i, j, k);
                for (int p = 0; p < 6; ++p) {
                    const auto gv = tet_gradient(g, p, path_values(c, p));
                    for (int corner : kPathCorners[p]) {
                        sum[c.index[corner]] += gv;
                        ++count[c.index[corner]];
                    }
                }
            }
    });
}

template <typename Real>
VertexNormals<Real> normals_from_sums(const std::vector<Vec3T<Real>>& sum, const std::vector<std::uint8_t>& count,
                                      std::vector<Real>* lengths) {
    VertexNormals<Real> out;
    out.normals.resize(sum.size());
    out.degenerate.assign(sum.size(), 0);
    if (lengths) lengths->assign(sum.size(), Real(0));
    for (std::size_t v = 0; v < sum.size(); ++v) {
        const Vec3T<Real> mean = count[v] ? sum[v] / Real(count[v]) : Vec3T<Real>{};
        const Real len = norm(mean);
        if (lengths) (*lengths)[v] = len;
        if (!(len >= Real(kDegenerateNormal))) {
            out.degenerate[v] = 1;
            out.normals[v] = {};
        } else {
            out.normals[v] = mean / len;
        }
    }
    return out;
}

template <typename Real>
Real normal_consistency_impl(const SdfField<Real>& field, std::span<Real> grad, Real weight) {
    const TetGrid& g = *field.grid;
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != field.values.size()) {
        throw ContractError("normal consistency gradient buffer has wrong length");
    }
    std::vector<Vec3T<Real>> sum;
    std::vector<std::uint8_t> count;
    accumulate_vertex_gradients(field, sum, count);
    std::vector<Real> lengths;
    const auto vn = normals_from_sums(sum, count, &lengths);

    const Real band = Real(kNormalBandCells * g.cell_size());
    const int n = g.resolution() + 1;
    auto usable = [&](Index v) {
        return !vn.degenerate[v] && std::abs(field.values[v]) <= band;
    };

    std::vector<Real> partial(std::size_t(n), Real(0));
    // dL/dn per vertex, filled by edge layer k into layers k and k+1.
    std::vector<Vec3T<Real>> dn;
    if (want_grad) dn.assign(g.vertex_count(), Vec3T<Real>{});

    auto layer = [&](std::size_t kk) {
        const int k = int(kk);
        Real s = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const Index a = g.vertex_index(i, j, k);
                if (!usable(a)) continue;
                for (const auto& d : TetGrid::kEdgeDirections) {
                    if (i + d[0] >= n || j + d[1] >= n || k + d[2] >= n) continue;
                    const Index b = g.vertex_index(i + d[0], j + d[1], k + d[2]);
                    if (!usable(b)) continue;
                    s += Real(1) - dot(vn.normals[a], vn.normals[b]);
                    if (want_grad) {
                        dn[a] -= vn.normals[b];
                        dn[b] -= vn.normals[a];
                    }
                }
            }
        partial[kk] = s;
    };
    if (want_grad) {
        detail::for_slabs_two_phase(std::size_t(n), layer);
    } else {
        detail::for_slabs(std::size_t(n), layer);
    }
    const Real loss = detail::ordered_sum(partial);
    if (!want_grad) return loss;

    // Back through normalization n = m/|m| with m = sum/count.
    std::vector<Vec3T<Real>> dm(g.vertex_count());
    for (std::size_t v = 0; v < dm.size(); ++v) {
        if (vn.degenerate[v]) continue;
        const auto& nv = vn.normals[v];
        const Vec3T<Real> tangential = dn[v] - nv * dot(nv, dn[v]);
        dm[v] = tangential * (weight / (lengths[v] * Real(count[v])));
    }
    const int R = g.resolution();
    const Real inv_h = Real(1.0 / g.cell_size());
    detail::for_slabs_two_phase(std::size_t(R), [&](std::size_t kk) {
        const int k = int(kk);
        for (int j = 0; j < R; ++j)
            for (int i = 0; i < R; ++i) {
                const auto c = load_cell(field, i, j, k);
                for (int p = 0; p < 6; ++p) {
                    Vec3T<Real> dg{};
                    for (int corner : kPathCorners[p]) dg += dm[c.index[corner]];
                    if (dg == Vec3T<Real>{}) continue;
                    scatter_gradient(dg, p, inv_h, c, grad);
                }
            }
    });
    return loss;
}

} // namespace

template <typename Real>
Real eikonal_loss(const SdfField<Real>& field) {
    return eikonal_impl(field, std::span<Real>{}, Real(0));
}

template <typename Real>
Real eikonal_loss(const SdfField<Real>& field, std::span<Real> grad, Real weight) {
    return eikonal_impl(field, grad, weight);
}

template <typename Real>
Real normal_consistency_loss(const SdfField<Real>& field) {
    return normal_consistency_impl(field, std::span<Real>{}, Real(0));
}

template <typename Real>
Real normal_consistency_loss(const SdfField<Real>& field, std::span<Real> grad, Real weight) {
    return normal_consistency_impl(field, grad, weight);
}

template <typename Real>
VertexNormals<Real> vertex_normals(const SdfField<Real>& field) {
    std::vector<Vec3T<Real>> sum;
    std::vector<std::uint8_t> count;
    accumulate_vertex_gradients(field, sum, count);
    return normals_from_sums<Real>(sum, count, nullptr);
}

#define TF_INSTANTIATE(Real)                                                                         \
    template struct SdfField<Real>;                                                                  \
    template SdfField<Real> field_from_function<Real>(std::shared_ptr<const TetGrid>,                \
                                                      const std::function<double(const Vec3&)>&);    \
    template SdfField<Real> init_sphere<Real>(std::shared_ptr<const TetGrid>, double);               \
    template SdfSample<Real> sdf_at<Real>(const SdfField<Real>&, const Vec3&);                       \
    template Vec3T<Real> tet_gradient<Real>(const TetGrid&, int, const std::array<Real, 4>&);        \
    template Real eikonal_loss<Real>(const SdfField<Real>&);                                         \
    template Real eikonal_loss<Real>(const SdfField<Real>&, std::span<Real>, Real);                  \
    template Real normal_consistency_loss<Real>(const SdfField<Real>&);                              \
    template Real normal_consistency_loss<Real>(const SdfField<Real>&, std::span<Real>, Real);       \
    template VertexNormals<Real> vertex_normals<Real>(const SdfField<Real>&);

TF_INSTANTIATE(float)
TF_INSTANTIATE(double)

#undef TF_INSTANTIATE

} // namespace tetforge
