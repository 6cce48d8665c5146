#pragma once

#include <cstdint>
#include <functional>

namespace decmarl {

// Calls fn(i) for i in [0, n) on up to `workers` threads (0 means hardware
// concurrency). Each index runs exactly once; the first exception is rethrown
// after all workers stop.
void parallel_for(std::int64_t n, int workers, const std::function<void(std::int64_t)>& fn);

int default_workers();

}  // namespace decmarl
