#pragma once

#include <cstddef>
#include <functional>

namespace brainage {

/// Number of worker threads used by the parallel kernels. 1 (the default) is
/// the deterministic single-threaded mode required by the tests.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs fn(i) for i in [begin, end). Work is split into contiguous chunks, one
/// per worker; fn must only write state owned by index i.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn);

/// Like parallel_for but hands each worker its chunk index so callers can keep
/// per-worker accumulators and reduce them in a fixed order afterwards.
void parallel_chunks(std::size_t begin, std::size_t end,
                     const std::function<void(std::size_t chunk, std::size_t lo, std::size_t hi)>& fn);

}  // namespace brainage
