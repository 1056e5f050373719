#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hmmcd {

/// Worker count for `requested` (0 = hardware concurrency).
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers and returns the
/// results indexed by i. Each trial must derive its randomness from i alone;
/// output order is canonical regardless of scheduling.
template <class Fn>
auto run_indexed(std::uint64_t n, unsigned threads, Fn&& fn) {
  using Result = decltype(fn(std::uint64_t{0}));
  std::vector<Result> out(n);
  threads = std::min<std::uint64_t>(resolve_threads(threads), std::max<std::uint64_t>(n, 1));
  if (threads <= 1) {
    for (std::uint64_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::uint64_t i = t; i < n; i += threads) out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace hmmcd
