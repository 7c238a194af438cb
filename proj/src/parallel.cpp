#include "biharm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace biharm {

namespace {
std::atomic<unsigned> g_max_threads{std::max(1u, std::thread::hardware_concurrency())};

std::size_t chunk_count(std::size_t count, std::size_t grain) {
  grain = std::max<std::size_t>(grain, 1);
  return (count + grain - 1) / grain;
}

void run_chunks(std::size_t chunks, const std::function<void(std::size_t)>& chunk_body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(g_max_threads.load(), chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) chunk_body(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      try {
        for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) chunk_body(c);
      } catch (...) {
        // Drain remaining chunks so the other workers stop early.
        next.store(chunks);
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}
}  // namespace

void set_max_threads(unsigned count) { g_max_threads.store(std::max(1u, count)); }
unsigned max_threads() { return g_max_threads.load(); }

void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  grain = std::max<std::size_t>(grain, 1);
  run_chunks(chunk_count(count, grain), [&](std::size_t c) {
    body(c * grain, std::min(count, (c + 1) * grain));
  });
}

double parallel_sum(std::size_t count, std::size_t grain,
                    const std::function<double(std::size_t, std::size_t)>& chunk_sum) {
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = chunk_count(count, grain);
  std::vector<double> partial(chunks, 0.0);
  run_chunks(chunks, [&](std::size_t c) {
    partial[c] = chunk_sum(c * grain, std::min(count, (c + 1) * grain));
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

std::vector<double> parallel_sum_vec(
    std::size_t count, std::size_t grain, std::size_t width,
    const std::function<void(std::size_t, std::size_t, std::vector<double>&)>& chunk_sum) {
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = chunk_count(count, grain);
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(width, 0.0));
  run_chunks(chunks, [&](std::size_t c) {
    chunk_sum(c * grain, std::min(count, (c + 1) * grain), partial[c]);
  });
  std::vector<double> total(width, 0.0);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < width; ++i) total[i] += p[i];
  return total;
}

}  // namespace biharm
