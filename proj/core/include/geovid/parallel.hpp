#pragma once

#include <cstddef>
#include <functional>

namespace geovid {

/// Worker count: GEOVID_THREADS if set and positive, else hardware concurrency (at least 1).
unsigned worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. The first
/// exception thrown by any job is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace geovid
