#pragma once

#include <cstddef>
#include <functional>

namespace caee {

/// Runs fn(0) ... fn(n - 1) on up to `workers` threads. Each index runs
/// exactly once; the first exception by index is rethrown after all finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace caee
