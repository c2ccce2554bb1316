#pragma once

#include "tetforge/parallel.hpp"

#include <vector>

namespace tetforge::detail {

// Runs fn(k) for k in [0, count): even k concurrently, then odd k. Work on
// slab k may write to lattice layers k and k+1 without races, and every
// location receives its contributions in a fixed order.
template <typename Fn>
void for_slabs_two_phase(std::size_t count, Fn&& fn) {
    for (std::size_t parity = 0; parity < 2; ++parity) {
        const std::size_t n = count > parity ? (count - parity + 1) / 2 : 0;
        parallel_chunks(n, 1, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) fn(parity + 2 * i);
        });
    }
}

// Runs fn(k) for k in [0, count) in any order.
template <typename Fn>
void for_slabs(std::size_t count, Fn&& fn) {
    parallel_chunks(count, 1, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

template <typename Real>
Real ordered_sum(const std::vector<Real>& partials) {
    Real s = 0;
    for (Real p : partials) s += p;
    return s;
}

} // namespace tetforge::detail
