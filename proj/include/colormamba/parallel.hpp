#pragma once

#include <cstdint>
#include <functional>

namespace colormamba {

// Worker count: min(hardware_concurrency, COLORMAMBA_THREADS). Results of all
// call sites are required to be independent of this value.
int worker_count();

// Runs fn(i) for i in [0, n). Tasks must write disjoint outputs.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace colormamba
