#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace flownet {

namespace detail {
inline std::atomic<unsigned>& thread_cap()
{
  static std::atomic<unsigned> cap{ 0 };
  return cap;
}
} // namespace detail

/// Caps the number of workers used by every parallel loop; 0 means hardware concurrency.
inline void set_max_threads(unsigned n) { detail::thread_cap() = n; }

inline unsigned max_threads()
{
  unsigned cap = detail::thread_cap().load();
  if (cap == 0)
    cap = std::max(1u, std::thread::hardware_concurrency());
  return cap;
}

/**
 * Runs body(begin, end) over [0, n) split into fixed blocks of `grain` items.
 * Blocks are handed out dynamically, so the body must only write to
 * locations owned by its block; block boundaries never depend on the
 * worker count.
 */
template<typename Body>
void parallel_blocks(std::size_t n, std::size_t grain, Body&& body)
{
  if (n == 0)
    return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t blocks = (n + grain - 1) / grain;
  const unsigned workers =
    static_cast<unsigned>(std::min<std::size_t>(max_threads(), blocks));
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b)
      body(b * grain, std::min(n, (b + 1) * grain));
    return;
  }

  std::atomic<std::size_t> next{ 0 };
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks)
        return;
      try {
        body(b * grain, std::min(n, (b + 1) * grain));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
        next = blocks;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w)
    pool.emplace_back(run);
  run();
  pool.clear();
  if (failure)
    std::rethrow_exception(failure);
}

/// Element-wise variant of parallel_blocks.
template<typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t grain = 64)
{
  parallel_blocks(n, grain, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      body(i);
  });
}

} // namespace flownet
