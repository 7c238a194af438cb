#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace biharm {

/// Caps the worker count used by every parallel loop (>= 1).
void set_max_threads(unsigned count);
unsigned max_threads();

/// Runs body(begin, end) over [0, count) split into fixed-size chunks.
/// Chunk boundaries depend only on count and grain, never on the thread count.
void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Deterministic reduction: per-chunk partial sums are combined in chunk order,
/// so results are bit-identical for any thread count.
double parallel_sum(std::size_t count, std::size_t grain,
                    const std::function<double(std::size_t, std::size_t)>& chunk_sum);

/// Vector-valued variant of parallel_sum; chunk_sum accumulates into its output span.
std::vector<double> parallel_sum_vec(
    std::size_t count, std::size_t grain, std::size_t width,
    const std::function<void(std::size_t, std::size_t, std::vector<double>&)>& chunk_sum);

}  // namespace biharm
