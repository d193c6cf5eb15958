#include "topopt/parallel.hpp"

#include <algorithm>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace topopt {

void set_num_threads(int n) {
#if defined(_OPENMP)
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

int num_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

} // namespace topopt
