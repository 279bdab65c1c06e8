#pragma once

#include <cstdint>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace headsynth {

// Every data-parallel kernel takes one of these. `serial` is the reference
// path the tests compare the OpenMP path against; both must agree bitwise.
enum class ExecPolicy { serial, parallel };

template <class Fn>
void for_each_index(ExecPolicy policy, std::int64_t count, Fn&& fn) {
  if (policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < count; ++i) fn(i);
  } else {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
  }
}

inline void set_thread_count(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace headsynth
