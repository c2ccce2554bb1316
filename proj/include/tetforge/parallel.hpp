#pragma once

#include <cstddef>
#include <functional>

namespace tetforge {

// Worker count: TF_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs fn(begin, end) over [0, n) split into fixed-size chunks. The chunking
// depends only on n and chunk, never on the worker count, so callers that
// reduce per-chunk partials in chunk order get thread-count-independent
// results.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t chunk_index, std::size_t begin,
                                              std::size_t end)>& fn);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk) {
    return chunk == 0 ? 0 : (n + chunk - 1) / chunk;
}

} // namespace tetforge
