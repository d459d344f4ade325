#pragma once

#include <cstddef>
#include <functional>
#include <vector>

/// Deterministic data-parallel helpers.
///
/// Work is always split into chunks of a fixed size that does not depend on
/// the number of threads. Reductions combine per-chunk partial results in
/// chunk order, so every result is bit-identical for any thread count.
namespace hsmlab::parallel {

inline constexpr std::size_t kDefaultChunk = 4096;

/// Number of worker threads used for chunked loops. Defaults to the
/// HSMLAB_THREADS environment variable, else the hardware concurrency.
int thread_count();

/// Overrides the thread count for the rest of the process (0 restores the
/// environment default).
void set_thread_count(int threads);

/// Calls body(begin, end, chunk_index) for each chunk of [0, n).
void for_chunks(std::size_t n, std::size_t chunk,
                const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

inline void for_chunks(std::size_t n,
                       const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  for_chunks(n, kDefaultChunk, body);
}

/// Sum of partial(begin, end) over fixed chunks, accumulated in chunk order.
double sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& partial,
           std::size_t chunk = kDefaultChunk);

/// Runs tasks(0..count-1) concurrently (one task per slot). Nested chunked
/// loops inside a task run serially on the calling thread.
void run_tasks(std::size_t count, const std::function<void(std::size_t)>& task);

}  // namespace hsmlab::parallel
