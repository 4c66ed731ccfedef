#include "xprospect/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace xprospect {

namespace {

std::size_t initial_workers() {
  if (const char* env = std::getenv("XPROSPECT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<std::size_t>& workers() {
  static std::atomic<std::size_t> n{initial_workers()};
  return n;
}

// Below this many scalar operations a call stays on the calling thread.
constexpr std::size_t kMinParallelWork = std::size_t{1} << 18;

}  // namespace

std::size_t worker_count() { return workers().load(); }

void set_worker_count(std::size_t n) { workers().store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t work_per_index) {
  const std::size_t threads = std::min(worker_count(), n);
  if (threads <= 1 || n * work_per_index < kMinParallelWork) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
#if defined(__SSE2__)
  const unsigned csr = _mm_getcsr();
#endif
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = n * t / threads, hi = n * (t + 1) / threads;
    pool.emplace_back([&, lo, hi] {
#if defined(__SSE2__)
      _mm_setcsr(csr);
#endif
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

}  // namespace xprospect
