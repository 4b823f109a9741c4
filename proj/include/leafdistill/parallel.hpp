#pragma once

#include <cstddef>
#include <functional>

namespace leafdistill {

// Worker count: LEAFDISTILL_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index runs exactly once; callers write
// results into preallocated slots so output never depends on scheduling.
// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace leafdistill
