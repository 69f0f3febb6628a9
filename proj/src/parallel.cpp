#include "costvol/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace costvol {
namespace {

thread_local int t_limit = 0;

int default_threads() {
  if (const char* env = std::getenv("STEREO_COSTVOL_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      // ignore malformed values
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace

int max_threads() { return t_limit > 0 ? t_limit : default_threads(); }

ThreadLimit::ThreadLimit(int threads) : previous_(t_limit) { t_limit = std::max(1, threads); }

ThreadLimit::~ThreadLimit() { t_limit = previous_; }

void parallel_for(int begin, int end, const std::function<void(int, int)>& body) {
  const int n = end - begin;
  if (n <= 0) return;
  const int threads = std::min(max_threads(), n);
  if (threads <= 1) {
    body(begin, end);
    return;
  }

  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  workers.reserve(threads - 1);
  const int chunk = (n + threads - 1) / threads;
  for (int t = 1; t < threads; ++t) {
    const int lo = begin + t * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&, t, lo, hi] {
      try {
        body(lo, hi);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  try {
    body(begin, std::min(end, begin + chunk));
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace costvol
