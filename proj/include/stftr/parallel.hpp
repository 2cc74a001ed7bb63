#pragma once

#include <cstddef>
#include <functional>

namespace stftr {

// Worker count: `requested` when positive, otherwise STFTR_THREADS, otherwise
// the hardware concurrency (at least 1).
std::size_t resolve_threads(std::size_t requested = 0);

// Runs body(i) for i in [0, n) on up to `threads` workers with a static
// contiguous partition. Bodies write to per-index slots; callers reduce in
// index order, so results do not depend on the worker count. The first
// exception thrown by a body is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace stftr
