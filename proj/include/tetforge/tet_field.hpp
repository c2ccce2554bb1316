#pragma once

// Tetrahedral lattice over [-1,1]^3 carrying a per-vertex signed distance
// field, with barycentric evaluation and the eikonal / normal-consistency
// regularizers and their derivatives.

#include "tetforge/vec3.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace tetforge {

using Index = std::uint32_t;

// Regular lattice of R^3 cubes, each split into 6 tetrahedra along the
// (0,0,0)-(1,1,1) diagonal (Freudenthal/Kuhn). Cube c, permutation p gives
// tet 6c+p with path vertices corner, +e_a, +e_a+e_b, +(1,1,1) where
// (a,b,c) = kPermutations[p]. Vertices, tets and edges are implicit so large
// resolutions do not materialize connectivity.
class TetGrid {
public:
    static constexpr int kMaxResolution = 512;
    static constexpr std::array<std::array<int, 3>, 6> kPermutations{{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    // Lattice directions of all Freudenthal edges leaving a vertex in the
    // positive sense.
    static constexpr std::array<std::array<int, 3>, 7> kEdgeDirections{{
        {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}}};

    explicit TetGrid(int resolution);

    int resolution() const noexcept { return resolution_; }
    double cell_size() const noexcept { return cell_; }
    std::size_t vertex_count() const noexcept { return std::size_t(n_) * n_ * n_; }
    std::size_t cell_count() const noexcept { return std::size_t(resolution_) * resolution_ * resolution_; }
    std::size_t tet_count() const noexcept { return 6 * cell_count(); }
    std::size_t edge_count() const noexcept;

    Index vertex_index(int i, int j, int k) const noexcept {
        return Index(i + n_ * (j + n_ * k));
    }
    std::array<int, 3> vertex_coords(Index v) const noexcept {
        return {int(v % n_), int((v / n_) % n_), int(v / (std::size_t(n_) * n_))};
    }
    Vec3 vertex(Index v) const noexcept;

    // Path-ordered vertices (corner, +e_a, +e_a+e_b, +1,1,1) of a tet.
    std::array<Index, 4> tet_path(std::size_t tet) const noexcept;
    // Positively oriented vertex tuple of a tet.
    std::array<Index, 4> tet(std::size_t tet) const noexcept;

    // Gradient of the path-ordered barycentric coordinates for tets of
    // permutation p (identical for every cube).
    const std::array<Vec3, 4>& barycentric_gradients(int perm) const noexcept { return bary_grad_[perm]; }

    struct Location {
        std::size_t tet;
        int perm;
        std::array<Index, 4> vertices; // path order
        std::array<double, 4> weights; // barycentric, path order
    };
    // O(1) point location; throws DomainError outside [-1,1]^3.
    Location locate(const Vec3& p) const;

    std::vector<Vec3> vertices() const;
    std::vector<std::array<Index, 4>> tets() const;
    std::vector<std::array<Index, 2>> edges() const;

private:
    int resolution_;
    int n_; // vertices per axis
    double cell_;
    std::array<std::array<Vec3, 4>, 6> bary_grad_{};
};

TetGrid build_grid(int resolution);

// Values with |f| below this are stored as +kZeroPerturbation.
inline constexpr double kZeroPerturbation = 1e-8;

template <typename Real>
inline Real perturb_zero(Real v) noexcept {
    return (v < Real(kZeroPerturbation) && v > -Real(kZeroPerturbation)) ? Real(kZeroPerturbation) : v;
}

template <typename Real>
struct SdfField {
    std::shared_ptr<const TetGrid> grid;
    std::vector<Real> values;

    std::size_t size() const noexcept { return values.size(); }
    void set(Index v, Real value) { values[v] = perturb_zero(value); }
    void apply_zero_perturbation();
};

// Samples fn at every vertex (with the zero perturbation applied).
template <typename Real>
SdfField<Real> field_from_function(std::shared_ptr<const TetGrid> grid,
                                   const std::function<double(const Vec3&)>& fn);

template <typename Real>
SdfField<Real> init_sphere(std::shared_ptr<const TetGrid> grid, double radius);

template <typename Real>
struct SdfSample {
    Real value;
    Vec3T<Real> gradient;
    std::size_t tet;
};

template <typename Real>
SdfSample<Real> sdf_at(const SdfField<Real>& field, const Vec3& point);

// Per-tet constant gradient from path-ordered vertex values.
template <typename Real>
Vec3T<Real> tet_gradient(const TetGrid& grid, int perm, const std::array<Real, 4>& values);

template <typename Real>
Real eikonal_loss(const SdfField<Real>& field);

// Also adds weight * dL/df into grad (same length as field values).
template <typename Real>
Real eikonal_loss(const SdfField<Real>& field, std::span<Real> grad, Real weight);

// Active-band width for normal consistency, in multiples of the cell size.
inline constexpr double kNormalBandCells = 2.0;

template <typename Real>
Real normal_consistency_loss(const SdfField<Real>& field);

template <typename Real>
Real normal_consistency_loss(const SdfField<Real>& field, std::span<Real> grad, Real weight);

inline constexpr double kDegenerateNormal = 1e-12;

template <typename Real>
struct VertexNormals {
    std::vector<Vec3T<Real>> normals;
    std::vector<std::uint8_t> degenerate;
};

template <typename Real>
VertexNormals<Real> vertex_normals(const SdfField<Real>& field);

} // namespace tetforge
