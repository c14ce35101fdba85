#pragma once

#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace unroll {

// Runs fn(i) for i in [0, n). jobs == 1 takes the plain serial loop (the
// reference path used by the determinism tests); jobs <= 0 means "use all
// hardware threads". Callers must make fn(i) independent of execution order:
// write into slot i of a preallocated buffer and reduce serially afterwards.
// That discipline is what makes --jobs 1 and --jobs 8 byte-identical.
template <class F>
void parallel_for(int n, int jobs, F&& fn) {
  if (n <= 0) return;
#ifdef _OPENMP
  if (jobs != 1 && n > 1) {
    const int threads = jobs > 0 ? jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

inline int hardware_jobs() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace unroll
