#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

/// Worker count: SCG_THREADS if set (>= 1), else the hardware concurrency.
inline Index worker_count() {
  if (const char* env = std::getenv("SCG_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return Index(v);
    } catch (const std::exception&) {
    }
    return 1;
  }
  return std::max<Index>(1, Index(std::thread::hardware_concurrency()));
}

/// Calls fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write into per-index slots and reduce afterwards, so results do not depend
/// on the worker count. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(Index n, Fn&& fn, Index workers = worker_count()) {
  workers = std::clamp<Index>(workers, 1, std::max<Index>(n, 1));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (Index i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace scg
