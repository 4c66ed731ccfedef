#pragma once

#include <cstddef>
#include <functional>

namespace xprospect {

/// Worker cap from XPROSPECT_THREADS (default: hardware concurrency).
std::size_t worker_count();
void set_worker_count(std::size_t n);

/// Runs fn(i) for i in [0, n). Each index must own its outputs, so the result
/// does not depend on how indices are split across workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t work_per_index = 1);

}  // namespace xprospect
