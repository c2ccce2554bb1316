#include "doctest.h"

#include "tetforge/error.hpp"
#include "tetforge/tet_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <random>
#include <set>

using namespace tetforge;

namespace {

std::shared_ptr<const TetGrid> grid_of(int r) { return std::make_shared<const TetGrid>(r); }

double det3(const Vec3& a, const Vec3& b, const Vec3& c) { return dot(a, cross(b, c)); }

// Independent per-tet gradient: solves the 3x3 system from explicit vertex
// positions by Cramer's rule.
Vec3 brute_gradient(const std::array<Vec3, 4>& p, const std::array<double, 4>& f) {
    const Vec3 e1 = p[1] - p[0], e2 = p[2] - p[0], e3 = p[3] - p[0];
    const double d1 = f[1] - f[0], d2 = f[2] - f[0], d3 = f[3] - f[0];
    // Rows are e1, e2, e3; solve M g = d.
    const double det = det3(e1, e2, e3);
    auto col = [&](int c, const Vec3& rhs) {
        Vec3 r0 = e1, r1 = e2, r2 = e3;
        r0[c] = rhs[0];
        r1[c] = rhs[1];
        r2[c] = rhs[2];
        return det3(r0, r1, r2);
    };
    const Vec3 rhs{d1, d2, d3};
    return {col(0, rhs) / det, col(1, rhs) / det, col(2, rhs) / det};
}

double brute_eikonal(const SdfField<double>& field) {
    const auto& g = *field.grid;
    double sum = 0;
    for (const auto& t : g.tets()) {
        std::array<Vec3, 4> p;
        std::array<double, 4> f;
        for (int q = 0; q < 4; ++q) {
            p[q] = g.vertex(t[q]);
            f[q] = field.values[t[q]];
        }
        const double dev = norm(brute_gradient(p, f)) - 1.0;
        sum += dev * dev;
    }
    return sum;
}

double brute_normal_consistency(const SdfField<double>& field) {
    const auto& g = *field.grid;
    std::vector<Vec3> acc(g.vertex_count());
    std::vector<int> cnt(g.vertex_count(), 0);
    std::set<std::pair<Index, Index>> edges;
    for (const auto& t : g.tets()) {
        std::array<Vec3, 4> p;
        std::array<double, 4> f;
        for (int q = 0; q < 4; ++q) {
            p[q] = g.vertex(t[q]);
            f[q] = field.values[t[q]];
        }
        const Vec3 grad = brute_gradient(p, f);
        for (int q = 0; q < 4; ++q) {
            acc[t[q]] += grad;
            ++cnt[t[q]];
            for (int r = q + 1; r < 4; ++r) edges.insert({std::min(t[q], t[r]), std::max(t[q], t[r])});
        }
    }
    const double band = 2.0 * g.cell_size();
    double sum = 0;
    for (auto [a, b] : edges) {
        if (std::abs(field.values[a]) > band || std::abs(field.values[b]) > band) continue;
        const Vec3 ma = acc[a] / double(cnt[a]), mb = acc[b] / double(cnt[b]);
        if (norm(ma) < 1e-12 || norm(mb) < 1e-12) continue;
        sum += 1.0 - dot(normalized(ma), normalized(mb));
    }
    return sum;
}

SdfField<double> bumpy_sphere(std::shared_ptr<const TetGrid> g, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.02, 0.02);
    auto f = init_sphere<double>(g, 0.55);
    for (auto& v : f.values) v += u(rng);
    return f;
}

} // namespace

TEST_CASE("build_grid counts and orientation") {
    CHECK(TetGrid(1).vertex_count() == 8);
    CHECK(TetGrid(1).tet_count() == 6);
    const TetGrid g2(2);
    CHECK(g2.vertex_count() == 27);
    CHECK(g2.tet_count() == 48);

    for (int r : {1, 2, 3}) {
        const TetGrid g(r);
        double total = 0;
        for (const auto& t : g.tets()) {
            const double vol = det3(g.vertex(t[1]) - g.vertex(t[0]), g.vertex(t[2]) - g.vertex(t[0]),
                                    g.vertex(t[3]) - g.vertex(t[0])) / 6.0;
            CHECK(vol > 0.0);
            total += vol;
        }
        CHECK(total == doctest::Approx(8.0).epsilon(1e-12));
    }
}

TEST_CASE("resolution out of range is a configuration error") {
    CHECK_THROWS_AS(TetGrid(0), ConfigError);
    CHECK_THROWS_AS(TetGrid(513), ConfigError);
    CHECK_NOTHROW(TetGrid(512));
}

TEST_CASE("interior faces are shared by exactly two tets and edges deduplicate") {
    const TetGrid g(3);
    std::map<std::array<Index, 3>, int> faces;
    std::set<std::pair<Index, Index>> tet_edges;
    for (const auto& t : g.tets()) {
        for (int skip = 0; skip < 4; ++skip) {
            std::array<Index, 3> f{};
            int n = 0;
            for (int q = 0; q < 4; ++q)
                if (q != skip) f[n++] = t[q];
            std::sort(f.begin(), f.end());
            ++faces[f];
        }
        for (int q = 0; q < 4; ++q)
            for (int r = q + 1; r < 4; ++r) tet_edges.insert({std::min(t[q], t[r]), std::max(t[q], t[r])});
    }
    int boundary = 0;
    for (const auto& [face, count] : faces) {
        CHECK(count <= 2);
        if (count == 1) {
            ++boundary;
            // Boundary faces lie on the cube surface.
            const auto c0 = g.vertex_coords(face[0]), c1 = g.vertex_coords(face[1]), c2 = g.vertex_coords(face[2]);
            bool on_side = false;
            for (int a = 0; a < 3; ++a) {
                on_side |= (c0[a] == c1[a] && c1[a] == c2[a] && (c0[a] == 0 || c0[a] == 3));
            }
            CHECK(on_side);
        }
    }
    CHECK(boundary == 6 * 2 * 9);

    const auto edges = g.edges();
    CHECK(edges.size() == g.edge_count());
    CHECK(edges.size() == tet_edges.size());
    for (const auto& e : edges) CHECK(tet_edges.count({std::min(e[0], e[1]), std::max(e[0], e[1])}) == 1);
}

TEST_CASE("init_sphere values and zero perturbation") {
    auto g = grid_of(4);
    const auto f = init_sphere<double>(g, 0.5);
    CHECK(f.values[g->vertex_index(2, 2, 2)] == doctest::Approx(-0.5));
    CHECK(f.values[g->vertex_index(4, 2, 2)] == doctest::Approx(0.5));
    // (0.5, 0, 0) is a vertex at R=4 and lies exactly on the sphere.
    CHECK(f.values[g->vertex_index(3, 2, 2)] == 1e-8);
    for (double v : f.values) CHECK(std::abs(v) >= 1e-8);
    CHECK_THROWS_AS(init_sphere<double>(g, 1.0), ConfigError);
    CHECK_THROWS_AS(init_sphere<double>(g, 0.0), ConfigError);
}

TEST_CASE("sdf_at reproduces linear fields exactly") {
    auto g = grid_of(5);
    const auto plane = field_from_function<double>(g, [](const Vec3& p) { return p.z + 3.0; });
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const auto s = sdf_at(plane, {u(rng), u(rng), u(rng)});
        CHECK(s.gradient.x == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(s.gradient.z == doctest::Approx(1.0).epsilon(1e-12));
    }

    const auto lin = field_from_function<double>(g, [](const Vec3& p) { return 2 * p.x + 3 * p.y - p.z + 10.0; });
    for (int i = 0; i < 100; ++i) {
        const Vec3 p{u(rng), u(rng), u(rng)};
        const auto s = sdf_at(lin, p);
        CHECK(std::abs(s.value - (2 * p.x + 3 * p.y - p.z + 10.0)) <= 1e-12);
        CHECK(std::abs(s.gradient.x - 2.0) <= 1e-12);
        CHECK(std::abs(s.gradient.y - 3.0) <= 1e-12);
        CHECK(std::abs(s.gradient.z + 1.0) <= 1e-12);
        const auto loc = g->locate(p);
        double wsum = 0;
        for (double w : loc.weights) {
            CHECK(w >= 0.0);
            wsum += w;
        }
        CHECK(std::abs(wsum - 1.0) <= 1e-12);
    }

    const auto sphere = init_sphere<double>(g, 0.5);
    for (Index v = 0; v < g->vertex_count(); v += 7) {
        CHECK(sdf_at(sphere, g->vertex(v)).value == doctest::Approx(sphere.values[v]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(sdf_at(sphere, {1.5, 0.0, 0.0}), DomainError);
}

TEST_CASE("eikonal loss oracles") {
    auto g = grid_of(4);
    const Vec3 n = normalized(Vec3{1.0, -2.0, 0.5});
    const auto plane = field_from_function<double>(g, [&](const Vec3& p) { return dot(p, n) + 5.0; });
    CHECK(eikonal_loss(plane) <= 1e-20);
    const auto doubled = field_from_function<double>(g, [&](const Vec3& p) { return 2.0 * dot(p, n) + 5.0; });
    CHECK(eikonal_loss(doubled) == doctest::Approx(6.0 * 64).epsilon(1e-12));

    auto g32 = grid_of(32);
    const auto sphere = init_sphere<double>(g32, 0.5);
    const double fast = eikonal_loss(sphere);
    const double brute = brute_eikonal(sphere);
    CHECK(std::abs(fast - brute) <= 1e-9 * std::abs(brute));
}

TEST_CASE("normal consistency oracles") {
    auto g = grid_of(6);
    const Vec3 n = normalized(Vec3{0.3, 0.2, 1.0});
    const auto plane = field_from_function<double>(g, [&](const Vec3& p) { return dot(p, n) * 0.1 + 0.0123; });
    CHECK(normal_consistency_loss(plane) <= 1e-12);

    // Values |z - zc| with zc mid-slab between layers 3 and 4: slab 3 is flat,
    // layer 3 normals point -z, layer 4 normals point +z.
    const double h = g->cell_size();
    const double zc = -1.0 + 3.5 * h;
    const auto valley = field_from_function<double>(g, [&](const Vec3& p) { return std::abs(p.z - zc); });
    const auto vn = vertex_normals(valley);
    CHECK(vn.normals[g->vertex_index(2, 2, 3)].z == doctest::Approx(-1.0));
    CHECK(vn.normals[g->vertex_index(2, 2, 4)].z == doctest::Approx(1.0));
    const std::size_t m = 7;
    const std::size_t crossing = m * m + 2 * (m - 1) * m + (m - 1) * (m - 1);
    CHECK(normal_consistency_loss(valley) == doctest::Approx(2.0 * crossing).epsilon(1e-12));

    auto g16 = grid_of(16);
    const auto sphere = init_sphere<double>(g16, 0.5);
    const double fast = normal_consistency_loss(sphere);
    const double brute = brute_normal_consistency(sphere);
    CHECK(brute > 0.0);
    CHECK(std::abs(fast - brute) <= 1e-9 * std::abs(brute));
}

TEST_CASE("vertex normals") {
    auto g = grid_of(6);
    const Vec3 n = normalized(Vec3{-1.0, 0.5, 0.25});
    const auto plane = field_from_function<double>(g, [&](const Vec3& p) { return dot(p, n); });
    for (const auto& v : vertex_normals(plane).normals) {
        CHECK(norm(v - n) <= 1e-6);
    }

    auto g32 = grid_of(32);
    const auto sphere = init_sphere<double>(g32, 0.5);
    const auto sn = vertex_normals(sphere);
    const Index v = g32->vertex_index(24, 16, 16); // (0.5, 0, 0)
    CHECK(std::acos(std::clamp(sn.normals[v].x, -1.0, 1.0)) <= 3.0 * M_PI / 180.0);
    for (std::size_t i = 0; i < sn.normals.size(); ++i) {
        if (!sn.degenerate[i]) CHECK(std::abs(norm(sn.normals[i]) - 1.0) <= 1e-6);
    }

    const auto zero = field_from_function<double>(g, [](const Vec3&) { return 0.0; });
    const auto zn = vertex_normals(zero);
    CHECK(std::all_of(zn.degenerate.begin(), zn.degenerate.end(), [](auto d) { return d == 1; }));
}

TEST_CASE("regularizer gradients match central finite differences") {
    auto g = grid_of(8);
    auto field = bumpy_sphere(g, 3);
    const double h = 1e-5;
    const double band = 2.0 * g->cell_size();

    std::vector<double> eik_grad(field.size(), 0.0), nc_grad(field.size(), 0.0);
    eikonal_loss<double>(field, eik_grad, 1.0);
    normal_consistency_loss<double>(field, nc_grad, 1.0);

    std::mt19937_64 rng(11);
    std::uniform_int_distribution<Index> pick(0, Index(field.size() - 1));
    int checked_nc = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const Index v = pick(rng);
        const double f0 = field.values[v];
        field.values[v] = f0 + h;
        const double ep = eikonal_loss(field), np = normal_consistency_loss(field);
        field.values[v] = f0 - h;
        const double em = eikonal_loss(field), nm = normal_consistency_loss(field);
        field.values[v] = f0;
        const double fd_e = (ep - em) / (2 * h);
        CHECK(std::abs(fd_e - eik_grad[v]) <= 1e-6 * std::max(1.0, std::abs(fd_e)));
        // Skip vertices whose neighbourhood straddles the band edge.
        if (std::abs(std::abs(f0) - band) > 0.05) {
            const double fd_n = (np - nm) / (2 * h);
            CHECK(std::abs(fd_n - nc_grad[v]) <= 1e-6 * std::max(1.0, std::abs(fd_n)));
            ++checked_nc;
        }
    }
    CHECK(checked_nc > 20);
}

TEST_CASE("loss sums do not depend on the worker count") {
    auto g = grid_of(12);
    const auto field = bumpy_sphere(g, 5);
    setenv("TF_THREADS", "1", 1);
    const double e1 = eikonal_loss(field), n1 = normal_consistency_loss(field);
    std::vector<double> g1(field.size());
    normal_consistency_loss<double>(field, g1, 1.0);
    setenv("TF_THREADS", "5", 1);
    const double e5 = eikonal_loss(field), n5 = normal_consistency_loss(field);
    std::vector<double> g5(field.size());
    normal_consistency_loss<double>(field, g5, 1.0);
    unsetenv("TF_THREADS");
    CHECK(e1 == e5);
    CHECK(n1 == n5);
    CHECK(g1 == g5);
}
