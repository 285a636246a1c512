#pragma once

#include <cstddef>
#include <functional>

namespace hireg {

/// Worker count: HIREG_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() threads using static
/// contiguous chunks. fn must only write to per-index state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace hireg
