#pragma once

#include <cstddef>
#include <functional>

namespace mergetest {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work items must write
// only to their own output slots; the first exception (lowest index) is
// rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace mergetest
