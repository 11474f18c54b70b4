#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nova {

// Shape/dimension violations on tensor ops.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mathematically undefined request (e.g. softmax over a fully masked row).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an API precondition.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable external data (files, manifests, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finiteness is required (NaN gradients etc.).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Worker-thread cap: NOVA_THREADS env var, clamped to [1, hardware_concurrency].
std::size_t thread_cap();

// Contiguous row-range parallelism. Each index is processed by exactly one
// worker with the same serial inner code, so results are bitwise identical
// at any thread count. Falls back to a plain loop for small ranges or a
// cap of one.
template <typename Fn>
void parallel_rows(std::size_t rows, std::size_t min_rows_per_thread,
                   Fn&& fn) {
  std::size_t threads = thread_cap();
  if (threads > 1 && min_rows_per_thread > 0)
    threads = std::min(threads, rows / min_rows_per_thread);
  if (threads <= 1) {
    for (std::size_t i = 0; i < rows; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::size_t chunk = (rows + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(rows, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace nova
