#pragma once

// Marching-tetrahedra surface extraction, vertex-colour baking, mesh
// statistics and PLY/OBJ export.

#include "tetforge/appearance.hpp"
#include "tetforge/tet_field.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

namespace tetforge {

struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<Index, 3>> triangles;
    std::vector<Vec3> colors; // empty, or one rgb in [0,1] per vertex

    bool has_colors() const noexcept { return !colors.empty(); }
};

// Triangles with twice-area at or below this are dropped.
inline constexpr double kDegenerateArea = 1e-12;
// Edge crossings this close to a lattice vertex are merged into it.
inline constexpr double kSnapDistance = 1e-5;

// Sign case of a tet: bit q set when vertex q is inside (f < 0).
struct TetCase {
    int count;                                      // triangles
    std::array<std::array<std::array<int, 2>, 3>, 2> tris; // each corner is a tet edge (local vertex pair)
};

// Triangle count per sign case; the reference the case table is checked against.
inline constexpr std::array<int, 16> kCaseTriangleCounts{0, 1, 1, 2, 1, 2, 2, 1, 1, 2, 2, 1, 2, 1, 1, 0};

// The case table in use. TF_FAULT=case_table corrupts one entry (fault
// injection for the validation suite).
const std::array<TetCase, 16>& case_table();

// Polygonizes one tet given its corner positions and values; vertices are not
// shared with anything else.
Mesh polygonize_tet(const std::array<Vec3, 4>& corners, const std::array<double, 4>& values);

template <typename Real>
Mesh marching_tetrahedra(const SdfField<Real>& field);

// Per-vertex unit normals, area-weighted from incident triangles.
std::vector<Vec3> mesh_vertex_normals(const Mesh& mesh);

template <typename Real>
Mesh bake_vertex_colors(const Mesh& mesh, const AppearanceField<Real>& appearance);

struct MeshStats {
    std::size_t vertices = 0;
    std::size_t edges = 0;
    std::size_t triangles = 0;
    bool watertight = false;
    long euler = 0;
    Vec3 bbox_min{};
    Vec3 bbox_max{};
    std::optional<double> max_sdf_residual; // when a field was supplied
};

MeshStats mesh_stats(const Mesh& mesh);

template <typename Real>
MeshStats mesh_stats(const Mesh& mesh, const SdfField<Real>& field);

// Throws IoError naming the path on failure.
void write_ply(const Mesh& mesh, const std::filesystem::path& path);
void write_obj(const Mesh& mesh, const std::filesystem::path& path);
// Reads the binary little-endian subset written by write_ply (plus optional
// colours); throws IoError on anything else.
Mesh read_ply(const std::filesystem::path& path);

inline constexpr const char* kPlyMagic = "ply\nformat binary_little_endian 1.0\n";

// Signed distance to a closed triangle mesh sampled at every grid vertex;
// the sign comes from the generalized winding number (inside < 0).
SdfField<double> mesh_to_sdf(const Mesh& mesh, std::shared_ptr<const TetGrid> grid);

} // namespace tetforge
