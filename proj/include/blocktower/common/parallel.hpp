#pragma once

#include <cstddef>
#include <functional>

namespace blocktower {

// Worker count: explicit value if > 0, else $BLOCKTOWER_JOBS, else the
// number of logical cores.
int resolve_jobs(int requested);

// Runs body(i) for i in [0, n) on up to `jobs` threads. Work is handed out
// dynamically; callers write results into index-addressed slots so the
// outcome does not depend on scheduling. The first exception thrown by any
// body is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace blocktower
