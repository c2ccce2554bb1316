#include "tetforge/meshing.hpp"

#include "tetforge/error.hpp"
#include "tetforge/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>

namespace tetforge {
namespace {

using Edge = std::array<int, 2>;

constexpr std::array<TetCase, 16> build_case_table() {
    std::array<TetCase, 16> table{};
    for (int c = 0; c < 16; ++c) {
        int in[4]{}, out[4]{};
        int ni = 0, no = 0;
        for (int q = 0; q < 4; ++q) {
            if (c & (1 << q)) in[ni++] = q;
            else out[no++] = q;
        }
        TetCase tc{};
        if (ni == 1 || ni == 3) {
            // One vertex separated from the other three.
            const int lone = ni == 1 ? in[0] : out[0];
            const int* rest = ni == 1 ? out : in;
            tc.count = 1;
            tc.tris[0] = {Edge{lone, rest[0]}, Edge{lone, rest[1]}, Edge{lone, rest[2]}};
        } else if (ni == 2) {
            // Quad through the four edges joining the two pairs, in cyclic order.
            const int a = in[0], b = in[1], c0 = out[0], d = out[1];
            tc.count = 2;
            tc.tris[0] = {Edge{a, c0}, Edge{a, d}, Edge{b, d}};
            tc.tris[1] = {Edge{a, c0}, Edge{b, d}, Edge{b, c0}};
        }
        table[c] = tc;
    }
    return table;
}

constexpr std::array<TetCase, 16> kCaseTable = build_case_table();

std::array<TetCase, 16> faulty_table() {
    auto t = kCaseTable;
    t[1].count = 0;
    return t;
}

bool fault_enabled(const char* name) {
    const char* v = std::getenv("TF_FAULT");
    return v && std::string(v) == name;
}

int case_index(const std::array<double, 4>& f) {
    int c = 0;
    for (int q = 0; q < 4; ++q)
        if (f[q] < 0) c |= 1 << q;
    return c;
}

Vec3 crossing(const Vec3& pa, const Vec3& pb, double fa, double fb) {
    const double t = fa / (fa - fb);
    return pa + (pb - pa) * t;
}

bool is_degenerate(const Vec3& a, const Vec3& b, const Vec3& c) {
    return norm(cross(b - a, c - a)) <= kDegenerateArea;
}

// Orients (a, b, c) so its normal points from the inside corner toward the outside one.
bool needs_flip(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& inside, const Vec3& outside) {
    return dot(cross(b - a, c - a), outside - inside) < 0;
}

int inside_corner(int c) { return std::countr_zero(unsigned(c)); }
int outside_corner(int c) { return std::countr_zero(unsigned(~c & 15)); }

std::uint8_t to_byte(double c) { return std::uint8_t(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); }

template <typename T>
void put(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

} // namespace

const std::array<TetCase, 16>& case_table() {
    static const std::array<TetCase, 16> faulty = faulty_table();
    return fault_enabled("case_table") ? faulty : kCaseTable;
}

Mesh polygonize_tet(const std::array<Vec3, 4>& p, const std::array<double, 4>& values) {
    std::array<double, 4> f;
    for (int q = 0; q < 4; ++q) f[q] = perturb_zero(values[q]);
    const int c = case_index(f);
    const TetCase& tc = case_table()[c];
    Mesh m;
    for (int k = 0; k < tc.count; ++k) {
        std::array<Vec3, 3> v;
        for (int j = 0; j < 3; ++j) {
            const auto [a, b] = tc.tris[k][j];
            v[j] = crossing(p[a], p[b], f[a], f[b]);
        }
        if (is_degenerate(v[0], v[1], v[2])) continue;
        if (needs_flip(v[0], v[1], v[2], p[inside_corner(c)], p[outside_corner(c)])) std::swap(v[1], v[2]);
        const Index base = Index(m.vertices.size());
        m.vertices.insert(m.vertices.end(), v.begin(), v.end());
        m.triangles.push_back({base, base + 1, base + 2});
    }
    return m;
}

template <typename Real>
Mesh marching_tetrahedra(const SdfField<Real>& field) {
    const TetGrid& grid = *field.grid;
    const std::uint64_t nv = grid.vertex_count();
    const auto& table = case_table();
    auto key_of = [nv](Index a, Index b) {
        return a < b ? std::uint64_t(a) * nv + b : std::uint64_t(b) * nv + a;
    };
    // Crossings within kSnapDistance of a lattice vertex collapse onto it, so
    // near-zero vertex values do not leave slivers whose removal opens holes.
    // Snapped keys live above nv * nv.
    const std::uint64_t snapped = nv * nv;
    auto snap_key = [&](std::uint64_t key) {
        const Index lo = Index(key / nv), hi = Index(key % nv);
        const double fa = double(field.values[lo]), fb = double(field.values[hi]);
        const double d = fa / (fa - fb) * norm(grid.vertex(hi) - grid.vertex(lo));
        if (d <= kSnapDistance) return snapped + lo;
        if (norm(grid.vertex(hi) - grid.vertex(lo)) - d <= kSnapDistance) return snapped + hi;
        return key;
    };
    // Position of the crossing on a global edge, always interpolated from the
    // lower-indexed end so every tet sharing the edge agrees bit for bit.
    auto edge_point = [&](std::uint64_t key) {
        if (key >= snapped) return grid.vertex(Index(key - snapped));
        const Index lo = Index(key / nv), hi = Index(key % nv);
        return crossing(grid.vertex(lo), grid.vertex(hi), double(field.values[lo]), double(field.values[hi]));
    };

    constexpr std::size_t kCellsPerChunk = 512;
    const std::size_t cells = grid.cell_count();
    std::vector<std::vector<std::array<std::uint64_t, 3>>> parts(chunk_count(cells, kCellsPerChunk));
    parallel_chunks(cells, kCellsPerChunk, [&](std::size_t chunk, std::size_t c0, std::size_t c1) {
        auto& out = parts[chunk];
        for (std::size_t cell = c0; cell < c1; ++cell)
            for (std::size_t t = cell * 6; t < cell * 6 + 6; ++t) {
                const auto tv = grid.tet_path(t);
                std::array<double, 4> f;
                for (int q = 0; q < 4; ++q) f[q] = double(field.values[tv[q]]);
                const int c = case_index(f);
                const TetCase& tc = table[c];
                for (int k = 0; k < tc.count; ++k) {
                    std::array<std::uint64_t, 3> keys;
                    std::array<Vec3, 3> v;
                    for (int j = 0; j < 3; ++j) {
                        const auto [a, b] = tc.tris[k][j];
                        keys[j] = snap_key(key_of(tv[a], tv[b]));
                        v[j] = edge_point(keys[j]);
                    }
                    if (keys[0] == keys[1] || keys[1] == keys[2] || keys[0] == keys[2]) continue;
                    if (is_degenerate(v[0], v[1], v[2])) continue;
                    if (needs_flip(v[0], v[1], v[2], grid.vertex(tv[inside_corner(c)]),
                                   grid.vertex(tv[outside_corner(c)]))) {
                        std::swap(keys[1], keys[2]);
                    }
                    out.push_back(keys);
                }
            }
    });

    Mesh m;
    std::unordered_map<std::uint64_t, Index> ids;
    for (const auto& part : parts)
        for (const auto& keys : part) {
            std::array<Index, 3> tri;
            for (int j = 0; j < 3; ++j) {
                auto [it, inserted] = ids.try_emplace(keys[j], Index(m.vertices.size()));
                if (inserted) m.vertices.push_back(edge_point(keys[j]));
                tri[j] = it->second;
            }
            m.triangles.push_back(tri);
        }
    return m;
}

std::vector<Vec3> mesh_vertex_normals(const Mesh& mesh) {
    std::vector<Vec3> n(mesh.vertices.size());
    for (const auto& t : mesh.triangles) {
        const Vec3 a = mesh.vertices[t[0]], b = mesh.vertices[t[1]], c = mesh.vertices[t[2]];
        const Vec3 fn = cross(b - a, c - a);
        for (Index v : t) n[v] += fn;
    }
    for (auto& x : n) x = normalized(x);
    return n;
}

template <typename Real>
Mesh bake_vertex_colors(const Mesh& mesh, const AppearanceField<Real>& appearance) {
    Mesh out = mesh;
    const auto normals = mesh_vertex_normals(mesh);
    out.colors.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        Vec3 p = mesh.vertices[i];
        for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], -1.0, 1.0);
        const auto rgb = shade(material_at(appearance, p), normals[i].cast<Real>());
        out.colors[i] = rgb.template cast<double>();
    }
    return out;
}

MeshStats mesh_stats(const Mesh& mesh) {
    MeshStats s;
    s.vertices = mesh.vertices.size();
    s.triangles = mesh.triangles.size();
    std::map<std::pair<Index, Index>, int> edges;
    for (const auto& t : mesh.triangles)
        for (int j = 0; j < 3; ++j) {
            Index a = t[j], b = t[(j + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edges[{a, b}];
        }
    s.edges = edges.size();
    s.watertight = !mesh.triangles.empty();
    for (const auto& [e, count] : edges) s.watertight = s.watertight && count == 2;
    s.euler = long(s.vertices) - long(s.edges) + long(s.triangles);
    if (!mesh.vertices.empty()) {
        s.bbox_min = s.bbox_max = mesh.vertices.front();
        for (const auto& v : mesh.vertices)
            for (int a = 0; a < 3; ++a) {
                s.bbox_min[a] = std::min(s.bbox_min[a], v[a]);
                s.bbox_max[a] = std::max(s.bbox_max[a], v[a]);
            }
    }
    return s;
}

template <typename Real>
MeshStats mesh_stats(const Mesh& mesh, const SdfField<Real>& field) {
    MeshStats s = mesh_stats(mesh);
    double worst = 0;
    for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(double(sdf_at(field, v).value)));
    s.max_sdf_residual = worst;
    return s;
}

void write_ply(const Mesh& mesh, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << kPlyMagic << "element vertex " << mesh.vertices.size() << "\n"
       << "property float x\nproperty float y\nproperty float z\n";
    if (mesh.has_colors()) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "element face " << mesh.triangles.size() << "\n"
       << "property list uchar uint vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        put(os, float(v.x));
        put(os, float(v.y));
        put(os, float(v.z));
        if (mesh.has_colors()) {
            for (int a = 0; a < 3; ++a) put(os, to_byte(mesh.colors[i][a]));
        }
    }
    for (const auto& t : mesh.triangles) {
        put(os, std::uint8_t(3));
        for (Index v : t) put(os, std::uint32_t(v));
    }
    os.flush();
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

void write_obj(const Mesh& mesh, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    char buf[160];
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        if (mesh.has_colors()) {
            const Vec3& c = mesh.colors[i];
            std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g %.6g %.6g %.6g\n", v.x, v.y, v.z, c.x, c.y, c.z);
        } else {
            std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        }
        os << buf;
    }
    for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    os.flush();
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

Mesh read_ply(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    auto bad = [&](const std::string& why) { return IoError("'" + path.string() + "': " + why); };
    std::string line;
    std::getline(is, line);
    if (line != "ply") throw bad("not a PLY file");
    std::getline(is, line);
    if (line != "format binary_little_endian 1.0") throw bad("unsupported PLY format '" + line + "'");

    std::size_t nv = 0, nf = 0;
    std::vector<std::string> vprops;
    std::string element;
    while (std::getline(is, line)) {
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment" || word == "obj_info") continue;
        if (word == "element") {
            std::size_t n = 0;
            ls >> element >> n;
            if (element == "vertex") nv = n;
            else if (element == "face") nf = n;
            else throw bad("unsupported element '" + element + "'");
        } else if (word == "property") {
            std::string type, name;
            ls >> type;
            if (element == "vertex") {
                ls >> name;
                vprops.push_back(type + " " + name);
            } else if (element == "face") {
                std::string ct, it;
                ls >> ct >> it >> name;
                if (type != "list" || ct != "uchar" || (it != "uint" && it != "int")) {
                    throw bad("unsupported face property '" + line + "'");
                }
            }
        } else {
            throw bad("unexpected header line '" + line + "'");
        }
    }
    const std::vector<std::string> plain{"float x", "float y", "float z"};
    std::vector<std::string> colored = plain;
    colored.insert(colored.end(), {"uchar red", "uchar green", "uchar blue"});
    const bool has_color = vprops == colored;
    if (!has_color && vprops != plain) throw bad("unsupported vertex layout");

    Mesh m;
    m.vertices.resize(nv);
    if (has_color) m.colors.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        const float x = get<float>(is), y = get<float>(is), z = get<float>(is);
        m.vertices[i] = {x, y, z};
        if (has_color) {
            for (int a = 0; a < 3; ++a) m.colors[i][a] = get<std::uint8_t>(is) / 255.0;
        }
    }
    m.triangles.resize(nf);
    for (std::size_t i = 0; i < nf; ++i) {
        if (get<std::uint8_t>(is) != 3) throw bad("only triangle faces are supported");
        for (int j = 0; j < 3; ++j) {
            const std::uint32_t v = get<std::uint32_t>(is);
            if (v >= nv) throw bad("face index out of range");
            m.triangles[i][j] = v;
        }
    }
    if (!is) throw bad("truncated file");
    return m;
}

namespace {

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

// Signed solid angle of triangle abc seen from p (Van Oosterom and Strackee).
double solid_angle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 x = a - p, y = b - p, z = c - p;
    const double lx = norm(x), ly = norm(y), lz = norm(z);
    const double num = dot(x, cross(y, z));
    const double den = lx * ly * lz + dot(x, y) * lz + dot(y, z) * lx + dot(z, x) * ly;
    return 2.0 * std::atan2(num, den);
}

} // namespace

SdfField<double> mesh_to_sdf(const Mesh& mesh, std::shared_ptr<const TetGrid> grid) {
    if (mesh.triangles.empty()) throw ConfigError("cannot build a distance field from an empty mesh");
    SdfField<double> f{grid, std::vector<double>(grid->vertex_count())};
    parallel_chunks(f.values.size(), 256, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 p = grid->vertex(Index(i));
            double best = std::numeric_limits<double>::infinity();
            double winding = 0;
            for (const auto& t : mesh.triangles) {
                const Vec3 &a = mesh.vertices[t[0]], &bb = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
                best = std::min(best, norm(p - closest_on_triangle(p, a, bb, c)));
                winding += solid_angle(p, a, bb, c);
            }
            winding /= 4.0 * std::numbers::pi;
            // Orientation-agnostic: |winding| is ~1 inside a closed surface, ~0 outside.
            f.values[i] = perturb_zero(std::abs(winding) > 0.5 ? -best : best);
        }
    });
    return f;
}

template Mesh marching_tetrahedra<float>(const SdfField<float>&);
template Mesh marching_tetrahedra<double>(const SdfField<double>&);
template Mesh bake_vertex_colors<float>(const Mesh&, const AppearanceField<float>&);
template Mesh bake_vertex_colors<double>(const Mesh&, const AppearanceField<double>&);
template MeshStats mesh_stats<float>(const Mesh&, const SdfField<float>&);
template MeshStats mesh_stats<double>(const Mesh&, const SdfField<double>&);

} // namespace tetforge
