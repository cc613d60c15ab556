#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace poisonstack::detail {

// Runs fn(i) for i in [0, n) across OpenMP threads. Jobs must be independent;
// the exception from the lowest failing index is rethrown after all finish.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
  std::size_t error_index = n;
  std::mutex lock;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> guard(lock);
      if (i < error_index) {
        error_index = i;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace poisonstack::detail
