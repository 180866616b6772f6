#pragma once

#include <cstddef>
#include <functional>

namespace tempoproj {

/// Worker cap: TEMPOPROJ_THREADS if set and positive, otherwise the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Override the worker cap for the current process (0 restores the default).
void set_worker_count(std::size_t workers);

/// Runs fn(i) for i in [0, n) over contiguous chunks. Calls made from inside a
/// worker run serially, so nested data-parallel loops do not oversubscribe.
/// The first exception (lowest chunk) is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tempoproj
