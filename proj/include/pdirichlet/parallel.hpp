#pragma once

#include <cstddef>
#include <functional>

namespace pdirichlet {

/// Worker cap: PDIRICHLET_THREADS if set and positive, otherwise the hardware concurrency.
std::size_t worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries depend only on
/// n and the worker count, so per-index results are reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace pdirichlet
