#pragma once

#include <functional>

namespace datf {

// Worker count from DATF_THREADS, defaulting to the hardware concurrency.
// Clamped to [1, 64].
int env_thread_count();

// Runs fn(0..n-1) on up to n_threads workers. fn must only write to
// per-index state; the call returns after every item has finished.
// n_threads <= 1 degenerates to a plain loop.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

}  // namespace datf
