#pragma once

// Data-parallel loop over independent per-cell work. Reductions stay serial
// so results do not depend on the thread count.
#if defined(AEROCROWD_HAVE_OPENMP)
#define AEROCROWD_PARALLEL_FOR _Pragma("omp parallel for schedule(static)")
#else
#define AEROCROWD_PARALLEL_FOR
#endif

namespace aerocrowd {

/// Applies AEROCROWD_THREADS (if set and positive) to the thread pool and
/// returns the thread count in effect. 1 without OpenMP.
int configure_threads();

}  // namespace aerocrowd
