#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace odekit {

/// Worker count from ODEKIT_WORKERS, else the hardware concurrency.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("ODEKIT_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count) on a small pool. Work items must write
/// only to their own slot. If any item throws, the exception of the lowest
/// failing index is rethrown once all workers have stopped, so the reported
/// failure never depends on scheduling.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, std::size_t workers = 0) {
  if (count == 0) return;
  if (workers == 0) workers = default_workers();
  workers = std::min(workers, count);

  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  // items past the lowest known failure are skipped; earlier ones still run
  std::atomic<std::size_t> first_failure{count};

  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || i > first_failure.load()) return;
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
        std::size_t seen = first_failure.load();
        while (i < seen && !first_failure.compare_exchange_weak(seen, i)) {
        }
      }
    }
  };

  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
  }
  const std::size_t failed = first_failure.load();
  if (failed < count) std::rethrow_exception(errors[failed]);
}

}  // namespace odekit
