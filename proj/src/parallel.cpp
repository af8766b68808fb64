#include "aerocrowd/parallel.hpp"

#include <cstdlib>

#if defined(AEROCROWD_HAVE_OPENMP)
#include <omp.h>
#endif

namespace aerocrowd {

int configure_threads() {
#if defined(AEROCROWD_HAVE_OPENMP)
  if (const char* env = std::getenv("AEROCROWD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace aerocrowd
