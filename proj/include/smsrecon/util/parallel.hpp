#pragma once

#include <cstddef>
#include <functional>

namespace smsrecon {

/// Worker count: SMSRECON_WORKERS if set (>= 1), else hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n). Each index runs exactly once; callers write
/// results into per-index slots so output order never depends on scheduling.
/// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, std::function<void(std::size_t)> const &fn);

} // namespace smsrecon
