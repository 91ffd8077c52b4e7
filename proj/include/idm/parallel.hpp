#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace idm {

/// SplitMix64 finalizer; used to derive independent per-item seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of item `index` under a run seed; depends on nothing else, so work
/// can be split across threads without changing any draw.
constexpr std::uint64_t item_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 1));
}

/// Worker count from the IDM_THREADS environment variable (default 1).
int default_thread_count();

/// Splits [0, n) into fixed-size blocks, evaluates `block_fn(begin, end)` for
/// each, and combines the block results by a pairwise tree. Block boundaries
/// and the tree shape depend only on n and `block`, so the result is the same
/// for every thread count. The exception of the lowest failing block is
/// rethrown.
template <class T, class BlockFn, class Combine>
T deterministic_reduce(std::size_t n, std::size_t block, int threads, T zero, BlockFn&& block_fn,
                       Combine&& combine) {
  if (n == 0) return zero;
  block = std::max<std::size_t>(block, 1);
  const std::size_t n_blocks = (n + block - 1) / block;
  std::vector<T> partial(n_blocks, zero);
  std::vector<std::exception_ptr> errors(n_blocks);
  auto run = [&](std::size_t b) {
    try {
      partial[b] = block_fn(b * block, std::min(n, (b + 1) * block));
    } catch (...) {
      errors[b] = std::current_exception();
    }
  };
  const int workers = static_cast<int>(std::min<std::size_t>(std::max(threads, 1), n_blocks));
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < n_blocks; b = next++) run(b);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t width = 1; width < n_blocks; width *= 2)
    for (std::size_t i = 0; i + width < n_blocks; i += 2 * width)
      partial[i] = combine(std::move(partial[i]), partial[i + width]);
  return std::move(partial[0]);
}

/// Calls fn(i) for every i in [0, n) on up to `threads` workers. Each index
/// is independent, so the outcome does not depend on scheduling. The
/// exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const int workers = static_cast<int>(std::min<std::size_t>(std::max(threads, 1), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace idm
