#pragma once

#include <cstddef>
#include <exception>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spansvm {

// Parallel execution helper shared by the span, estimator and grid kernels.
// workers == 1 runs the plain serial loop, which is the reference path the
// tests compare the OpenMP path against. Results must be written to
// per-index slots; reductions happen serially afterwards so that serial and
// parallel runs aggregate identically.

inline int hardware_workers() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Resolve a requested worker count: 0 means "all available".
inline int resolve_workers(int requested) {
    if (requested <= 0) return hardware_workers();
    return requested;
}

template <typename Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
    workers = resolve_workers(workers);
#ifdef _OPENMP
    if (workers > 1 && n > 1) {
        std::exception_ptr err;
#pragma omp parallel for schedule(dynamic) num_threads(workers)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical(spansvm_parallel_for_err)
                if (!err) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace spansvm
