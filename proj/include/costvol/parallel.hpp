#pragma once

#include <functional>

namespace costvol {

// Thread cap used by internal parallel loops on the calling thread.
// Resolution order: innermost ThreadLimit on this thread, then the
// STEREO_COSTVOL_THREADS environment variable, then hardware concurrency.
int max_threads();

class ThreadLimit {
 public:
  explicit ThreadLimit(int threads);
  ~ThreadLimit();
  ThreadLimit(const ThreadLimit&) = delete;
  ThreadLimit& operator=(const ThreadLimit&) = delete;

 private:
  int previous_;
};

// Splits [begin, end) into contiguous chunks and runs body(lo, hi) on up to
// max_threads() threads. Work items must be independent; every reduction
// inside body runs in a fixed order, so results do not depend on the split.
void parallel_for(int begin, int end, const std::function<void(int, int)>& body);

}  // namespace costvol
