#pragma once

#include <cstddef>
#include <functional>

namespace speclab {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Callers get
/// deterministic results by writing into index i of a preallocated buffer;
/// scheduling order never leaks into the output. workers <= 1 runs inline;
/// workers == 0 uses the hardware thread count.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

/// Resolved worker count (0 -> hardware concurrency, floor 1).
int resolve_workers(int workers);

}  // namespace speclab
