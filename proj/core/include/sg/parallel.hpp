#pragma once

#include <cstddef>
#include <functional>

namespace sg {

// Global worker count for the embarrassingly parallel loops (node->cell
// assignment).  Reductions are always performed serially in index order, so
// the thread count never changes any computed value, only wall time.
void set_thread_count(int n);
int thread_count();

// Runs fn(begin, end) over disjoint index ranges covering [0, n).
void parallel_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace sg
