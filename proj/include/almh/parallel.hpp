#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace almh {

inline int& thread_setting() {
  static int n = 0;
  return n;
}

// 0 keeps the runtime default.
inline void set_threads(int n) {
  thread_setting() = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

// Runs body(i) for i in [0, n). Callers write results into slot i and reduce
// afterwards in index order, so output never depends on the thread count.
template <class F>
void parallel_for(std::size_t n, F&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < static_cast<long long>(n); ++i) body(static_cast<std::size_t>(i));
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace almh
