#pragma once

#include <cstddef>
#include <functional>

namespace ternia {

/// Worker cap from TERNIA_THREADS; unset or 0 means hardware concurrency.
unsigned worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index is
/// processed exactly once; callers write results to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace ternia
