#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gwtrace {

/// Runs fn(i) for i in [0, count) on up to `threads` workers.  Work is
/// handed out dynamically; callers write results into slot i and merge in
/// index order afterwards, so the outcome never depends on `threads`.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// fn(first, last, chunk) over a fixed split of [0, total) into at most 64
/// chunks; the split does not depend on `threads`.
inline constexpr std::size_t kChunks = 64;

template <class Fn>
void parallel_chunks(std::uint64_t total, unsigned threads, Fn&& fn) {
  const std::size_t chunks = static_cast<std::size_t>(std::min<std::uint64_t>(total, kChunks));
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::uint64_t a = total * c / chunks, b = total * (c + 1) / chunks;
    fn(a, b, c);
  });
}

}  // namespace gwtrace
