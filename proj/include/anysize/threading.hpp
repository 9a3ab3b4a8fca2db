#pragma once

#include <cstdint>
#include <functional>

namespace anysize {

/// Worker count for parallel_for. BLAS is always pinned to one thread; the
/// library parallelizes only over disjoint output ranges, so results are
/// bitwise identical for every thread count.
void set_num_threads(int n);
int num_threads();

/// Runs fn over contiguous chunks of [0, n). fn(begin, end) must write only
/// to state owned by its index range.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace anysize
