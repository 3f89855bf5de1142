#include "brainage/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace brainage {

namespace {
std::atomic<std::size_t> g_num_threads{1};
}

void set_num_threads(std::size_t n) { g_num_threads = std::max<std::size_t>(1, n); }

std::size_t num_threads() { return g_num_threads; }

void parallel_chunks(std::size_t begin, std::size_t end,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  const std::size_t workers = std::min(num_threads(), count);
  if (workers <= 1) {
    fn(0, begin, end);
    return;
  }
  const std::size_t per = (count + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = begin + w * per;
      const std::size_t hi = std::min(end, lo + per);
      if (lo >= hi) break;
      pool.emplace_back([&, w, lo, hi] {
        try {
          fn(w, lo, hi);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn) {
  parallel_chunks(begin, end, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) fn(i);
  });
}

}  // namespace brainage
