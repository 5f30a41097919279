#pragma once

// Fixed-size worker pool over indexed tasks. Results are stored by task index,
// so the output does not depend on the worker count or scheduling.

#include <atomic>
#include <exception>
#include <thread>
#include <type_traits>
#include <vector>

namespace adrrl::orchestrator {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

template <class F>
auto parallel_map(std::size_t n_tasks, int workers, F&& fn) -> std::vector<std::invoke_result_t<F&, std::size_t>> {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<R> results(n_tasks);
  const int w = std::min<int>(resolve_workers(workers), static_cast<int>(n_tasks));
  if (w <= 1) {
    for (std::size_t k = 0; k < n_tasks; ++k) results[k] = fn(k);
    return results;
  }
  std::vector<std::exception_ptr> errors(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n_tasks; k = next++) {
      try {
        results[k] = fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < w; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  // lowest failing index wins, independent of timing
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace adrrl::orchestrator
