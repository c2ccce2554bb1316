#include "doctest.h"

#include "tetforge/error.hpp"
#include "tetforge/simd/kernels.hpp"

#include <cstring>
#include <random>
#include <vector>

using namespace tetforge;
using namespace tetforge::simd;

namespace {

template <typename T>
std::vector<T> random_vector(std::size_t n, std::mt19937_64& rng, T lo = T(-3), T hi = T(3)) {
    std::uniform_real_distribution<T> dist(lo, hi);
    std::vector<T> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
void check_equivalence() {
    const auto& ref = *table_for<T>(Isa::scalar);
    std::mt19937_64 rng(12345);
    for (Isa isa : available_isas()) {
        const auto* table = table_for<T>(isa);
        REQUIRE(table != nullptr);
        CAPTURE(isa_name(isa));
        // Lengths straddling every vector width, including empty and tails.
        for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 15u, 16u, 17u, 33u, 1001u}) {
            const auto x = random_vector<T>(n, rng);
            const auto y = random_vector<T>(n, rng);
            const T a = T(0.8660254037844386), b = T(-1.25);

            std::vector<T> out_ref(n), out(n);
            ref.axpby(x.data(), y.data(), a, b, out_ref.data(), n);
            table->axpby(x.data(), y.data(), a, b, out.data(), n);
            CHECK(bit_equal(out_ref, out));

            ref.sub(x.data(), y.data(), out_ref.data(), n);
            table->sub(x.data(), y.data(), out.data(), n);
            CHECK(bit_equal(out_ref, out));

            out_ref = x;
            out = x;
            ref.scale(out_ref.data(), T(0.3), n);
            table->scale(out.data(), T(0.3), n);
            CHECK(bit_equal(out_ref, out));

            auto p_ref = random_vector<T>(n, rng);
            auto p = p_ref;
            auto m_ref = random_vector<T>(n, rng, T(-0.1), T(0.1));
            auto m = m_ref;
            auto v_ref = random_vector<T>(n, rng, T(0), T(0.5));
            auto v = v_ref;
            const AdamCoefficients<T> c{T(0.01), T(0.9), T(0.99), T(1e-8), T(1) - T(0.9) * T(0.9),
                                        T(1) - T(0.99) * T(0.99)};
            ref.adam(p_ref.data(), x.data(), m_ref.data(), v_ref.data(), n, c);
            table->adam(p.data(), x.data(), m.data(), v.data(), n, c);
            CHECK(bit_equal(p_ref, p));
            CHECK(bit_equal(m_ref, m));
            CHECK(bit_equal(v_ref, v));
        }
    }
}

} // namespace

TEST_CASE("every available SIMD variant is bit-identical to the scalar reference") {
    check_equivalence<float>();
    check_equivalence<double>();
}

TEST_CASE("axpby aliasing its input") {
    std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9};
    const std::vector<double> y(9, 1.0);
    axpby<double>(x, y, 2.0, -1.0, x);
    CHECK(x[0] == 1.0);
    CHECK(x[8] == 17.0);
}

TEST_CASE("length mismatches are contract errors") {
    std::vector<float> a(4), b(5), out(4);
    CHECK_THROWS_AS(axpby<float>(a, b, 1.f, 1.f, out), ContractError);
    CHECK_THROWS_AS(sub<float>(a, b, out), ContractError);
}

TEST_CASE("active table reports a supported variant") {
    const Isa isa = active_isa();
    CHECK(table_for<double>(isa) != nullptr);
    CHECK(active<double>().isa == isa);
}
