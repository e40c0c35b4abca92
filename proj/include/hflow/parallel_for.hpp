#pragma once

#include <cstddef>
#include <functional>

namespace hflow {

/// Global worker-count cap, settable once from the CLI. Workers only ever
/// write disjoint ranges, and reductions stay sequential, so the thread count
/// never changes results.
void set_max_threads(int count);
int max_threads();

/// Runs body(i) for i in [0, count), split into contiguous chunks across at
/// most max_threads() workers. Falls back to a plain loop for small counts.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Chunked variant: body(begin, end) per contiguous range.
void parallel_for_ranges(std::size_t count,
                         const std::function<void(std::size_t, std::size_t)>& body);

} // namespace hflow
