#pragma once

#include <cstddef>
#include <functional>

namespace fruitsplat {

/// Worker count: `requested` when > 0, else hardware concurrency. A positive FRUITSPLAT_THREADS caps it.
int resolve_thread_count(int requested = 0);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Work items are claimed
/// dynamically, so callers must write results to per-item slots only.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

} // namespace fruitsplat
